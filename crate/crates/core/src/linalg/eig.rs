//! Block inverse iteration with Rayleigh-Ritz extraction: smallest
//! eigenpairs of Hermitian PSD operators, and minimum right singular vectors
//! of row-banded matrices.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct MinEigOptions {
    /// Number of vectors iterated together.
    pub block: usize,
    pub max_iter: usize,
    /// Convergence tolerance; see each routine.
    pub tol: f64,
}

impl Default for MinEigOptions {
    fn default() -> Self {
        Self {
            block: 4,
            max_iter: 60,
            tol: 1e-13,
        }
    }
}

/// Smallest eigenpair of the Hermitian operator `apply`, given a solver for
/// the shifted system `(G + shift I) x = b`.
///
/// `start` is always part of the first block, so the returned Rayleigh
/// quotient never exceeds that of `start`.
pub(crate) fn min_eigenpair_inverse<T>(
    apply: impl Fn(&DMatrix<T>) -> DMatrix<T>,
    solve: impl Fn(&DMatrix<T>) -> DMatrix<T>,
    start: &DVector<T>,
    scale: f64,
    opts: &MinEigOptions,
) -> (DVector<T>, f64)
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = start.len();
    let b = opts.block.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d_756c_616e);
    let mut x = DMatrix::<T>::from_fn(n, b, |_, _| T::from_real(rng.random_range(-1.0..1.0)));
    let start_norm = start.norm();
    let have_start = start_norm > 0.0 && start_norm.is_finite();
    if have_start {
        x.set_column(0, &start.unscale(start_norm));
    }
    let rayleigh = |v: &DVector<T>| {
        let gv = apply(&DMatrix::from_column_slice(n, 1, v.as_slice()));
        v.dotc(&gv.column(0)).real() / v.norm_squared()
    };
    let start_theta = if have_start {
        rayleigh(start)
    } else {
        f64::INFINITY
    };

    let mut best = (x.column(0).into_owned(), start_theta);
    for _ in 0..opts.max_iter {
        let q = solve(&x).qr().q();
        let gq = apply(&q);
        let h = q.adjoint() * &gq;
        let h = (&h + h.adjoint()).scale(0.5);
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let u = DMatrix::from_fn(q.ncols(), q.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
        x = &q * &u;
        let gx = gq * &u;
        let theta = eig.eigenvalues[order[0]];
        let v = x.column(0).into_owned();
        let residual = (gx.column(0) - v.scale(theta)).norm();
        if theta.is_finite() {
            best = (v, theta);
        }
        if residual <= opts.tol * scale {
            break;
        }
    }
    if have_start && !(best.1 <= start_theta) {
        return (start.unscale(start_norm), start_theta);
    }
    let norm = best.0.norm();
    (best.0.unscale(norm), best.1.max(0.0))
}

/// Sparse matrix whose every row holds `width` consecutive entries starting
/// at a per-row column offset.
#[derive(Debug, Clone)]
pub struct BandedRows {
    cols: usize,
    width: usize,
    starts: Vec<usize>,
    vals: Vec<Complex64>,
}

impl BandedRows {
    pub fn new(cols: usize, width: usize) -> Self {
        assert!(
            width >= 1 && width <= cols,
            "row width must lie in 1..=cols"
        );
        Self {
            cols,
            width,
            starts: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Appends a row whose entries `vals` occupy columns `start..start + width`.
    pub fn push_row(&mut self, start: usize, vals: &[Complex64]) {
        assert_eq!(vals.len(), self.width, "row length");
        assert!(
            start + self.width <= self.cols,
            "row exceeds the column range"
        );
        self.starts.push(start);
        self.vals.extend_from_slice(vals);
    }

    pub fn rows(&self) -> usize {
        self.starts.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn row(&self, i: usize) -> (usize, &[Complex64]) {
        (
            self.starts[i],
            &self.vals[i * self.width..(i + 1) * self.width],
        )
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows())
            .map(|i| {
                let (s, r) = self.row(i);
                r.iter()
                    .zip(&x[s..s + self.width])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut d = DMatrix::zeros(self.rows(), self.cols);
        for i in 0..self.rows() {
            let (s, r) = self.row(i);
            for (c, v) in r.iter().enumerate() {
                d[(i, s + c)] = *v;
            }
        }
        d
    }

    /// Upper triangular `R` with `R^H R = A^H A`, by Givens rotations.
    pub fn triangular_factor(&self) -> UpperBanded {
        let n = self.cols;
        let w = self.width;
        let mut r = UpperBanded {
            n,
            w,
            vals: vec![Complex64::new(0.0, 0.0); n * w],
            filled: vec![false; n],
        };
        let mut order: Vec<usize> = (0..self.rows()).collect();
        order.sort_by_key(|&i| self.starts[i]);
        let mut buf = vec![Complex64::new(0.0, 0.0); w];
        for i in order {
            let (start, row) = self.row(i);
            buf.copy_from_slice(row);
            // buf[d] holds column j + d of the row being reduced.
            let mut j = start;
            while j < n {
                if buf.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                    break;
                }
                let rj = &mut r.vals[j * w..(j + 1) * w];
                if !r.filled[j] {
                    rj.copy_from_slice(&buf);
                    r.filled[j] = true;
                    break;
                }
                let alpha = rj[0];
                let beta = buf[0];
                if beta != Complex64::new(0.0, 0.0) {
                    if alpha == Complex64::new(0.0, 0.0) {
                        rj.swap_with_slice(&mut buf);
                    } else {
                        let norm = alpha.norm().hypot(beta.norm());
                        let c = alpha.norm() / norm;
                        let s = (alpha / alpha.norm()) * beta.conj() / norm;
                        for (p, q) in rj.iter_mut().zip(buf.iter_mut()) {
                            let (a, b) = (*p, *q);
                            *p = a * c + s * b;
                            *q = -s.conj() * a + b * c;
                        }
                    }
                }
                buf.rotate_left(1);
                buf[w - 1] = Complex64::new(0.0, 0.0);
                j += 1;
            }
        }
        r
    }
}

/// Square upper triangular matrix with `w - 1` superdiagonals.
#[derive(Debug, Clone)]
pub struct UpperBanded {
    n: usize,
    w: usize,
    // vals[i * w + d] = R[i, i + d]
    vals: Vec<Complex64>,
    filled: Vec<bool>,
}

impl UpperBanded {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if j < i || j - i >= self.w {
            Complex64::new(0.0, 0.0)
        } else {
            self.vals[i * self.w + (j - i)]
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Solves `R^H R x = b` in place, with diagonal entries smaller than
    /// `floor` replaced by `floor`.
    pub fn solve_normal_in_place(&self, b: &mut [Complex64], floor: f64) {
        let (n, w) = (self.n, self.w);
        let diag = |i: usize| {
            let d = self.vals[i * w];
            if d.norm() < floor {
                Complex64::new(floor, 0.0)
            } else {
                d
            }
        };
        // R^H y = b
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(w - 1)..i {
                s -= self.vals[k * w + (i - k)].conj() * b[k];
            }
            b[i] = s / diag(i).conj();
        }
        // R x = y
        for i in (0..n).rev() {
            let mut s = b[i];
            for d in 1..w.min(n - i) {
                s -= self.vals[i * w + d] * b[i + d];
            }
            b[i] = s / diag(i);
        }
    }
}

/// Unit vector minimizing `|A v|` for a row-banded `A`, warm-started at `start`.
///
/// Works on a triangular factor of `A` rather than on `A^H A`, so singular
/// values are resolved to about `eps |A|`. Stops once the smallest Ritz value
/// improves by less than `tol` relative. The returned vector never does worse
/// than `start`.
pub fn banded_min_right_singular_vector(
    a: &BandedRows,
    start: &[Complex64],
    opts: &MinEigOptions,
) -> (DVector<Complex64>, f64) {
    let n = a.cols();
    assert_eq!(start.len(), n, "start vector length");
    let r = a.triangular_factor();
    let floor = (f64::EPSILON * r.max_abs()).max(f64::MIN_POSITIVE);
    let apply_norm = |v: &[Complex64]| {
        a.mul_vec(v)
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    };

    let b = opts.block.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d_756c_616e);
    let mut x = DMatrix::<Complex64>::from_fn(n, b, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let start_vec = DVector::from_column_slice(start);
    let start_norm = start_vec.norm();
    let have_start = start_norm > 0.0 && start_norm.is_finite();
    let start_sigma = if have_start {
        x.set_column(0, &start_vec.unscale(start_norm));
        apply_norm(start) / start_norm
    } else {
        f64::INFINITY
    };

    let mut best: Option<(DVector<Complex64>, f64)> = None;
    for _ in 0..opts.max_iter {
        for mut col in x.column_iter_mut() {
            let mut v: Vec<Complex64> = col.iter().copied().collect();
            r.solve_normal_in_place(&mut v, floor);
            col.copy_from_slice(&v);
        }
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            break;
        }
        let basis = x.clone().qr().q();
        let mut image = DMatrix::<Complex64>::zeros(a.rows(), basis.ncols());
        for (mut out, col) in image.column_iter_mut().zip(basis.column_iter()) {
            let y = a.mul_vec(col.as_slice());
            out.copy_from_slice(&y);
        }
        let svd = image.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let rot = DMatrix::from_fn(basis.ncols(), order.len(), |i, j| vt[(order[j], i)].conj());
        x = &basis * rot;
        let sigma = svd.singular_values[order[0]];
        let v = x.column(0).into_owned();
        let improved = match &best {
            Some((_, prev)) => prev - sigma > opts.tol * prev,
            None => true,
        };
        if best.as_ref().is_none_or(|(_, prev)| sigma < *prev) {
            best = Some((v, sigma));
        }
        if !improved {
            break;
        }
    }
    match best {
        Some((v, sigma)) if !have_start || sigma <= start_sigma => {
            let norm = v.norm();
            (v.unscale(norm), sigma)
        }
        _ => (start_vec.unscale(start_norm), start_sigma),
    }
}
