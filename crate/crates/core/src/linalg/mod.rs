//! Numerical kernels shared by the solvers: Toeplitz operators for the
//! valid-region convolution, minimum singular vectors, polynomial rooting and
//! Vandermonde weight fits.
//!
//! The convolution convention throughout is
//! `(u * v)(n) = sum_j u[j] v[L - 1 + n - j]` for `n = 0..=D-L`, with `u` of
//! length `L` and `v` of length `D`.

mod eig;

pub(crate) use eig::min_eigenpair_inverse;
pub use eig::{banded_min_right_singular_vector, BandedRows, MinEigOptions, UpperBanded};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::spectral::Spectrum;

pub type ComplexMatrix = DMatrix<Complex64>;

const TRIM_REL: f64 = 1e-12;
const DUPLICATE_ROOT_TOL: f64 = 1e-9;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// The `(D - L + 1) x L` matrix `T` with `T * u = u * v` for every `u` of length `L`.
pub fn toeplitz_full(v: &[Complex64], window: usize) -> Result<ComplexMatrix> {
    let d = v.len();
    if window == 0 || window > d {
        return Err(invalid(format!(
            "window {window} out of range for a vector of length {d}"
        )));
    }
    let rows = d - window + 1;
    Ok(ComplexMatrix::from_fn(rows, window, |i, j| {
        v[window - 1 + i - j]
    }))
}

/// The banded `(D - L + 1) x D` matrix `T0` with `T0 * v = u * v` for every `v` of length `D`.
pub fn toeplitz_zero(u: &[Complex64], width: usize) -> Result<ComplexMatrix> {
    let l = u.len();
    if l == 0 || l > width {
        return Err(invalid(format!(
            "filter length {l} out of range for width {width}"
        )));
    }
    let rows = width - l + 1;
    Ok(ComplexMatrix::from_fn(rows, width, |i, j| {
        // Row i touches v[i..=i + L - 1]; v[L - 1 + i - k] pairs with u[k].
        if j >= i && j < i + l {
            u[l - 1 + i - j]
        } else {
            c(0.0)
        }
    }))
}

/// Valid-region convolution `u * v` evaluated directly.
pub fn convolve_valid(u: &[Complex64], v: &[Complex64]) -> Result<Vec<Complex64>> {
    let (l, d) = (u.len(), v.len());
    if l == 0 || l > d {
        return Err(invalid(format!(
            "filter length {l} out of range for a vector of length {d}"
        )));
    }
    Ok((0..=d - l)
        .map(|n| {
            u.iter()
                .enumerate()
                .map(|(j, &uj)| uj * v[l - 1 + n - j])
                .sum()
        })
        .collect())
}

/// Full linear convolution, i.e. the coefficients of a polynomial product.
pub fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![c(0.0); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Ascending coefficients of `prod_k (y - r_k)`.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    roots
        .iter()
        .fold(vec![c(1.0)], |acc, &r| poly_mul(&acc, &[-r, c(1.0)]))
}

/// Evaluates `sum_k a_k y^k` by Horner's rule.
pub fn poly_eval(coeffs: &[Complex64], y: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(c(0.0), |acc, &a| acc * y + a)
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Unit vector `v` minimizing `|A v|`, together with the smallest singular value.
///
/// The global phase of `v` is arbitrary.
pub fn min_right_singular_vector(a: &ComplexMatrix) -> Result<(DVector<Complex64>, f64)> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(invalid("matrix must be nonempty"));
    }
    if a.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
        return Err(Error::NonFinite("matrix entries"));
    }
    let cols = a.ncols();
    // A wide matrix has a null space the thin SVD does not return; pad it square.
    let padded;
    let m = if a.nrows() < cols {
        let mut p = ComplexMatrix::zeros(cols, cols);
        p.rows_mut(0, a.nrows()).copy_from(a);
        padded = p;
        &padded
    } else {
        a
    };
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or(Error::NonFinite("svd"))?;
    let (imin, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("nonempty");
    let v = DVector::from_iterator(cols, v_t.row(imin).iter().map(|x| x.conj()));
    if !sigma.is_finite() || v.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
        return Err(Error::NonFinite("singular vectors"));
    }
    let norm = v.norm();
    Ok((v / c(norm), sigma.max(0.0)))
}

/// Roots of `sum_k a_k y^k` from the eigenvalues of the companion matrix.
///
/// Trailing coefficients below `1e-12 * |a|` are trimmed first.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    if coeffs
        .iter()
        .any(|x| !(x.re.is_finite() && x.im.is_finite()))
    {
        return Err(Error::NonFinite("polynomial coefficients"));
    }
    let scale = vec_norm(coeffs);
    if scale == 0.0 {
        return Err(Error::DegeneratePolynomial);
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].norm() <= TRIM_REL * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Err(Error::DegeneratePolynomial);
    }
    let lead = coeffs[deg];
    let monic: Vec<Complex64> = coeffs[..deg].iter().map(|&a| a / lead).collect();
    if deg == 1 {
        return Ok(vec![-monic[0]]);
    }
    let mut comp = ComplexMatrix::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = c(1.0);
    }
    for (i, &m) in monic.iter().enumerate() {
        comp[(i, deg - 1)] = -m;
    }
    let (_, t) = comp.schur().unpack();
    let poly = &coeffs[..=deg];
    let deriv: Vec<Complex64> = poly
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| a * k as f64)
        .collect();
    let roots = (0..deg)
        .map(|i| polish_root(poly, &deriv, t[(i, i)]))
        .collect();
    Ok(roots)
}

/// A few guarded Newton steps; a step is kept only if it reduces |P|.
fn polish_root(poly: &[Complex64], deriv: &[Complex64], mut y: Complex64) -> Complex64 {
    let mut val = poly_eval(poly, y).norm();
    for _ in 0..3 {
        let d = poly_eval(deriv, y);
        if d.norm() == 0.0 {
            break;
        }
        let next = y - poly_eval(poly, y) / d;
        let next_val = poly_eval(poly, next).norm();
        if next_val.is_finite() && next_val < val {
            y = next;
            val = next_val;
        } else {
            break;
        }
    }
    y
}

/// Nonnegative echo weights from known geometric ratios.
///
/// Solves `h = V(r) D c` in the least-squares sense, where `V[i, k] = r_k^i`
/// and `D = diag(exp(-2 pi i f1 tau_k))`, then keeps `|c|`.
pub fn vandermonde_weights(roots: &[Complex64], h: &Spectrum, f1: f64) -> Result<Vec<f64>> {
    let k = roots.len();
    let f = h.len();
    if k == 0 {
        return Err(invalid("need at least one root"));
    }
    if f < k {
        return Err(Error::TooFewFrequencies {
            echoes: k,
            required: k,
            available: f,
        });
    }
    let mut min_sep = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            min_sep = min_sep.min((roots[i] - roots[j]).norm());
        }
    }
    if min_sep <= DUPLICATE_ROOT_TOL {
        return Err(Error::RepeatedRoots(min_sep));
    }
    let v = ComplexMatrix::from_fn(f, k, |i, j| roots[j].powu(i as u32));
    let rhs = DVector::from_column_slice(h.values());
    let svd = v.svd(true, true);
    let y = svd
        .solve(&rhs, 0.0)
        .map_err(|e| invalid(format!("vandermonde solve failed: {e}")))?;
    let delta_f = h.grid().step();
    let weights: Vec<f64> = roots
        .iter()
        .zip(y.iter())
        .map(|(r, yk)| {
            let tau = -r.arg() / (2.0 * PI * delta_f);
            let d = Complex64::from_polar(1.0, -2.0 * PI * f1 * tau);
            (yk / d).norm()
        })
        .collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("vandermonde weights"));
    }
    Ok(weights)
}

/// Filter taps `a_0..a_K` annihilating a sum of `K` geometric progressions.
///
/// Under the valid-region convolution the taps `[1, -r]` annihilate `r^i`,
/// so the progression ratios are the roots of the *reversed* coefficient
/// polynomial `sum_k a_k y^(K-k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnihilatingFilter {
    coeffs: Vec<Complex64>,
}

impl AnnihilatingFilter {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(invalid("annihilating filter needs at least 2 taps"));
        }
        if coeffs
            .iter()
            .any(|x| !(x.re.is_finite() && x.im.is_finite()))
        {
            return Err(Error::NonFinite("filter taps"));
        }
        Ok(Self { coeffs })
    }

    /// Unit-norm filter built by chaining the two-tap factors `[1, -r_k]`.
    pub fn from_ratios(ratios: &[Complex64]) -> Result<Self> {
        let taps = ratios
            .iter()
            .fold(vec![c(1.0)], |acc, &r| poly_mul(&acc, &[c(1.0), -r]));
        Self::new(taps)?.normalized()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.coeffs)
    }

    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::DegeneratePolynomial);
        }
        Ok(Self {
            coeffs: self.coeffs.into_iter().map(|a| a / n).collect(),
        })
    }

    /// Roots of the tap polynomial `sum_k a_k y^k`.
    pub fn polynomial_roots(&self) -> Result<Vec<Complex64>> {
        polynomial_roots(&self.coeffs)
    }

    /// Ratios of the geometric progressions this filter annihilates.
    pub fn ratios(&self) -> Result<Vec<Complex64>> {
        let reversed: Vec<Complex64> = self.coeffs.iter().rev().copied().collect();
        polynomial_roots(&reversed)
    }

    /// Residual `a * h` over the valid region.
    pub fn apply(&self, h: &[Complex64]) -> Result<Vec<Complex64>> {
        convolve_valid(&self.coeffs, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FrequencyGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cv(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x)).collect()
    }

    fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn unit(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::from_polar(1.0, rng.random_range(-PI..PI))
    }

    /// Expanded by hand: (u * v)(n) = sum_j u(j) v(L - 1 + n - j).
    fn conv_oracle(u: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
        let l = u.len();
        let mut out = Vec::new();
        for n in 0..=(v.len() - l) {
            let mut acc = c(0.0);
            for j in 0..l {
                acc += u[j] * v[l - 1 + n - j];
            }
            out.push(acc);
        }
        out
    }

    fn assert_root_sets_close(a: &[Complex64], b: &[Complex64], tol: f64) {
        assert_eq!(a.len(), b.len());
        let mut used = vec![false; b.len()];
        for x in a {
            let (j, d) = b
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, y)| (j, (x - y).norm()))
                .min_by(|p, q| p.1.total_cmp(&q.1))
                .unwrap();
            assert!(d < tol, "root {x} unmatched (closest distance {d:e})");
            used[j] = true;
        }
    }

    #[test]
    fn toeplitz_full_layout() {
        let t = toeplitz_full(&cv(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        let expect = [[2.0, 1.0], [3.0, 2.0], [4.0, 3.0]];
        assert_eq!(t.shape(), (3, 2));
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(t[(i, j)], c(expect[i][j]));
            }
        }
    }

    #[test]
    fn toeplitz_full_products() {
        let t = toeplitz_full(&cv(&[1.0, 1.0, 1.0, 1.0]), 2).unwrap();
        let out = t * DVector::from_vec(cv(&[1.0, -1.0]));
        assert!(out.iter().all(|x| x.norm() == 0.0));

        let t = toeplitz_full(&cv(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        let out = t * DVector::from_vec(cv(&[1.0, 0.0]));
        assert_eq!(out.as_slice(), cv(&[2.0, 3.0, 4.0]).as_slice());
    }

    #[test]
    fn toeplitz_matches_convolution_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_cvec(&mut rng, 4);
        let v = random_cvec(&mut rng, 11);
        let oracle = conv_oracle(&u, &v);
        let t = toeplitz_full(&v, 4).unwrap() * DVector::from_vec(u.clone());
        let direct = convolve_valid(&u, &v).unwrap();
        for i in 0..oracle.len() {
            assert!((t[i] - oracle[i]).norm() < 1e-14);
            assert!((direct[i] - oracle[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn toeplitz_zero_first_difference() {
        let t = toeplitz_zero(&cv(&[1.0, -1.0]), 4).unwrap();
        let expect = [
            [-1.0, 1.0, 0.0, 0.0],
            [0.0, -1.0, 1.0, 0.0],
            [0.0, 0.0, -1.0, 1.0],
        ];
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(t[(i, j)], c(expect[i][j]));
            }
        }
    }

    #[test]
    fn toeplitz_zero_identity_for_single_tap() {
        let t = toeplitz_zero(&cv(&[1.0]), 3).unwrap();
        assert_eq!(t, ComplexMatrix::identity(3, 3));
    }

    #[test]
    fn toeplitz_pair_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let u = random_cvec(&mut rng, 3);
            let v = random_cvec(&mut rng, 8);
            let a = toeplitz_zero(&u, 8).unwrap() * DVector::from_vec(v.clone());
            let b = toeplitz_full(&v, 3).unwrap() * DVector::from_vec(u.clone());
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn toeplitz_range_errors() {
        assert!(toeplitz_full(&cv(&[1.0, 2.0]), 3).is_err());
        assert!(toeplitz_full(&cv(&[1.0, 2.0]), 0).is_err());
        assert!(toeplitz_zero(&cv(&[1.0, 2.0, 3.0]), 2).is_err());
        assert!(toeplitz_zero(&[], 2).is_err());
    }

    #[test]
    fn annihilation_of_geometric_progression() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for f in [2usize, 3, 10, 50] {
            let w = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let prog: Vec<Complex64> = (0..f).map(|i| w.powu(i as u32)).collect();
            let t = toeplitz_full(&prog, 2).unwrap();
            let out = t * DVector::from_vec(vec![c(1.0), -w]);
            assert!(out
                .iter()
                .all(|x| x.norm() <= 1e-12 * w.norm().max(1.0).powi(f as i32)));
        }
    }

    #[test]
    fn chained_filter_annihilates_sum_of_progressions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ratios: Vec<Complex64> = (0..4).map(|_| unit(&mut rng)).collect();
        let weights: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..1.0)).collect();
        let h: Vec<Complex64> = (0..20)
            .map(|i| {
                ratios
                    .iter()
                    .zip(&weights)
                    .map(|(r, w)| r.powu(i) * *w)
                    .sum()
            })
            .collect();
        let filt = AnnihilatingFilter::from_ratios(&ratios).unwrap();
        let res = filt.apply(&h).unwrap();
        assert!(vec_norm(&res) <= 1e-10);
        assert_root_sets_close(&filt.ratios().unwrap(), &ratios, 1e-10);
    }

    #[test]
    fn min_singular_vector_diagonal() {
        let a = ComplexMatrix::from_diagonal(&DVector::from_vec(cv(&[2.0, 3.0])));
        let (v, s) = min_right_singular_vector(&a).unwrap();
        assert!((s - 2.0).abs() < 1e-14);
        assert!((v[0].norm() - 1.0).abs() < 1e-14 && v[1].norm() < 1e-14);

        let a = ComplexMatrix::from_row_slice(2, 2, &cv(&[1.0, 0.0, 0.0, 0.0]));
        let (v, s) = min_right_singular_vector(&a).unwrap();
        assert!(s.abs() < 1e-14);
        assert!(v[0].norm() < 1e-14 && (v[1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn min_singular_vector_matches_gram_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = ComplexMatrix::from_vec(10, 4, random_cvec(&mut rng, 40));
        let (v, s) = min_right_singular_vector(&a).unwrap();
        let gram = a.adjoint() * &a;
        let eig = gram.symmetric_eigen();
        let (imin, lam) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        assert!((s - lam.sqrt()).abs() < 1e-10);
        let oracle = eig.eigenvectors.column(imin);
        // Same one-dimensional subspace: |<v, oracle>| = 1.
        assert!((v.dotc(&oracle).norm() - 1.0).abs() < 1e-10);
        assert!(((&a * &v).norm() - s).abs() < 1e-10);
    }

    #[test]
    fn min_singular_vector_wide_matrix_has_null_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = ComplexMatrix::from_vec(2, 3, random_cvec(&mut rng, 6));
        let (v, s) = min_right_singular_vector(&a).unwrap();
        assert!(s < 1e-12);
        assert!((&a * &v).norm() < 1e-12);
    }

    #[test]
    fn min_singular_vector_rejects_nan() {
        let mut a = ComplexMatrix::identity(2, 2);
        a[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(min_right_singular_vector(&a).is_err());
    }

    #[test]
    fn min_singular_vector_beats_random_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = ComplexMatrix::from_vec(7, 5, random_cvec(&mut rng, 35));
        let (v, _) = min_right_singular_vector(&a).unwrap();
        let best = (&a * &v).norm();
        let scale = a.norm();
        for _ in 0..1000 {
            let mut u = DVector::from_vec(random_cvec(&mut rng, 5));
            u /= c(u.norm());
            assert!(best <= (&a * &u).norm() + 1e-9 * scale);
        }
    }

    #[test]
    fn roots_of_small_polynomials() {
        assert_root_sets_close(
            &polynomial_roots(&cv(&[1.0, -1.0])).unwrap(),
            &cv(&[1.0]),
            1e-14,
        );
        assert_root_sets_close(
            &polynomial_roots(&cv(&[2.0, -3.0, 1.0])).unwrap(),
            &cv(&[1.0, 2.0]),
            1e-12,
        );
    }

    #[test]
    fn roots_trim_trailing_zeros() {
        let r = polynomial_roots(&cv(&[2.0, -3.0, 1.0, 1e-15])).unwrap();
        assert_root_sets_close(&r, &cv(&[1.0, 2.0]), 1e-12);
    }

    #[test]
    fn roots_errors() {
        assert!(matches!(
            polynomial_roots(&cv(&[0.0, 0.0])),
            Err(Error::DegeneratePolynomial)
        ));
        assert!(matches!(
            polynomial_roots(&cv(&[3.0, 0.0])),
            Err(Error::DegeneratePolynomial)
        ));
    }

    #[test]
    fn roots_residual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in 1..=10 {
            let a = random_cvec(&mut rng, k + 1);
            let scale = vec_norm(&a);
            for r in polynomial_roots(&a).unwrap() {
                let bound = 1e-8 * scale * r.norm().max(1.0).powi(k as i32);
                assert!(poly_eval(&a, r).norm() <= bound);
            }
        }
    }

    #[test]
    fn roots_round_trip_unit_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let r: Vec<Complex64> = (0..3).map(|_| unit(&mut rng)).collect();
            let a = poly_mul(
                &poly_mul(&[c(1.0), -r[0]], &[c(1.0), -r[1]]),
                &[c(1.0), -r[2]],
            );
            // Taps [1, -r] put the ratio at the reciprocal root of the tap polynomial.
            let got = polynomial_roots(&a).unwrap();
            let recip: Vec<Complex64> = r.iter().map(|x| x.inv()).collect();
            assert_root_sets_close(&got, &recip, 1e-10);
            let filt = AnnihilatingFilter::new(a).unwrap();
            assert_root_sets_close(&filt.ratios().unwrap(), &r, 1e-10);
            assert_root_sets_close(&polynomial_roots(&poly_from_roots(&r)).unwrap(), &r, 1e-10);
        }
    }

    #[test]
    fn vandermonde_single_dirac_at_origin() {
        let g = FrequencyGrid::new(200.0, 4.5, 5).unwrap();
        let h = Spectrum::new(vec![c(1.0); 5], g).unwrap();
        let w = vandermonde_weights(&[c(1.0)], &h, 200.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn vandermonde_two_echoes() {
        let g = FrequencyGrid::new(200.0, 4.5, 11).unwrap();
        let (ta, tb) = (0.00123, 0.0311);
        let h = Spectrum::from_fn(g, |f| {
            Complex64::from_polar(0.7, -2.0 * PI * f * ta)
                + Complex64::from_polar(0.3, -2.0 * PI * f * tb)
        })
        .unwrap();
        let ratios: Vec<Complex64> = [ta, tb]
            .iter()
            .map(|t| Complex64::from_polar(1.0, -2.0 * PI * 4.5 * t))
            .collect();
        let w = vandermonde_weights(&ratios, &h, 200.0).unwrap();
        assert!((w[0] - 0.7).abs() < 1e-10 && (w[1] - 0.3).abs() < 1e-10);
    }

    #[test]
    fn vandermonde_errors() {
        let g = FrequencyGrid::new(200.0, 4.5, 3).unwrap();
        let h = Spectrum::new(vec![c(1.0); 3], g).unwrap();
        assert!(matches!(
            vandermonde_weights(&[c(1.0), c(1.0)], &h, 200.0),
            Err(Error::RepeatedRoots(_))
        ));
        let four: Vec<Complex64> = (0..4)
            .map(|k| Complex64::from_polar(1.0, k as f64))
            .collect();
        assert!(matches!(
            vandermonde_weights(&four, &h, 200.0),
            Err(Error::TooFewFrequencies { .. })
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn chained_filter_annihilates_random_progressions(seed in 0u64..100_000, k in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ratios: Vec<Complex64> = (0..k).map(|_| unit(&mut rng)).collect();
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let h: Vec<Complex64> = (0..3 * k as u32 + 2)
                .map(|i| ratios.iter().zip(&weights).map(|(r, w)| r.powu(i) * *w).sum())
                .collect();
            let res = AnnihilatingFilter::from_ratios(&ratios).unwrap().apply(&h).unwrap();
            proptest::prop_assert_eq!(res.len(), h.len() - k);
            proptest::prop_assert!(vec_norm(&res) <= 1e-10 * vec_norm(&h));
        }

        #[test]
        fn min_singular_vector_is_unit_and_no_worse_than_basis(seed in 0u64..100_000, rows in 2usize..9, cols in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = ComplexMatrix::from_fn(rows, cols, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let (v, s) = min_right_singular_vector(&a).unwrap();
            proptest::prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(((&a * &v).norm() - s).abs() <= 1e-10 * a.norm().max(1.0));
            for j in 0..cols {
                proptest::prop_assert!(s <= a.column(j).norm() + 1e-12);
            }
        }
    }
}
