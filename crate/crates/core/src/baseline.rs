//! Two-channel discrete-time baselines: cross-relation least squares, its
//! l1-penalized variant, and peak picking of the estimated filters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fri::EchoSet;
use crate::linalg::{min_eigenpair_inverse, MinEigOptions};
use crate::spectral::RealSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterNormalization {
    /// `|h1|^2 + |h2|^2 = 1`.
    UnitJointNorm,
    /// `h1[0] = 1`.
    FirstTapOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFilterPair {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// Cross-relation residual (plus the penalty for the sparse variant).
    pub residual: f64,
    pub normalization: FilterNormalization,
}

impl DiscreteFilterPair {
    /// Peak-picked echoes of both filters.
    pub fn echoes(&self, k: usize, fs: f64) -> Result<Vec<EchoSet>> {
        Ok(vec![
            peak_pick(&self.h1, k, fs)?,
            peak_pick(&self.h2, k, fs)?,
        ])
    }
}

fn check_pair(x1: &RealSignal, x2: &RealSignal, l: usize) -> Result<()> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch(format!(
            "signals of length {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    if x1.sample_rate() != x2.sample_rate() {
        return Err(invalid("signals have different sample rates"));
    }
    if l == 0 || x1.len() < 2 * l {
        return Err(invalid(format!(
            "filter length {l} needs at least {} samples, got {}",
            2 * l.max(1),
            x1.len()
        )));
    }
    if x1.energy() == 0.0 || x2.energy() == 0.0 {
        return Err(invalid("zero signal"));
    }
    Ok(())
}

/// `B[j, k] = sum_n a[L-1+n-j] b[L-1+n-k]` for `n = 0..=N-L`, i.e. `Toep(a)^T Toep(b)`.
fn toeplitz_cross_gram(a: &[f64], b: &[f64], l: usize) -> DMatrix<f64> {
    let n = a.len();
    let direct = |j: usize, k: usize| -> f64 {
        (0..=n - l)
            .map(|i| a[l - 1 + i - j] * b[l - 1 + i - k])
            .sum()
    };
    let mut g = DMatrix::zeros(l, l);
    for k in 0..l {
        g[(0, k)] = direct(0, k);
    }
    for j in 1..l {
        g[(j, 0)] = direct(j, 0);
    }
    for j in 0..l - 1 {
        for k in 0..l - 1 {
            g[(j + 1, k + 1)] =
                g[(j, k)] + a[l - 2 - j] * b[l - 2 - k] - a[n - 1 - j] * b[n - 1 - k];
        }
    }
    g
}

/// Gram matrix of `[Toep(x2), -Toep(x1)]`.
fn cross_relation_gram(x1: &[f64], x2: &[f64], l: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(2 * l, 2 * l);
    g.view_mut((0, 0), (l, l))
        .copy_from(&toeplitz_cross_gram(x2, x2, l));
    let off = toeplitz_cross_gram(x2, x1, l);
    g.view_mut((0, l), (l, l)).copy_from(&(-&off));
    g.view_mut((l, 0), (l, l)).copy_from(&(-off.transpose()));
    g.view_mut((l, l), (l, l))
        .copy_from(&toeplitz_cross_gram(x1, x1, l));
    g
}

/// `|h1 * x2 - h2 * x1|^2` over the valid region.
pub fn cr_residual(x1: &RealSignal, x2: &RealSignal, h1: &[f64], h2: &[f64]) -> Result<f64> {
    let l = h1.len();
    if h2.len() != l {
        return Err(Error::DimensionMismatch("filters differ in length".into()));
    }
    check_pair(x1, x2, l)?;
    let (a, b) = (x1.samples(), x2.samples());
    Ok((0..=a.len() - l)
        .map(|n| {
            (0..l)
                .map(|j| h1[j] * b[l - 1 + n - j] - h2[j] * a[l - 1 + n - j])
                .sum::<f64>()
                .powi(2)
        })
        .sum())
}

/// Cross-relation estimate under `|h1|^2 + |h2|^2 = 1`: the minimum
/// eigenvector of the Gram matrix of `[Toep(x2), -Toep(x1)]`.
pub fn cr_solve(x1: &RealSignal, x2: &RealSignal, l: usize) -> Result<DiscreteFilterPair> {
    check_pair(x1, x2, l)?;
    let g = cross_relation_gram(x1.samples(), x2.samples(), l);
    let scale = g.diagonal().max();
    let mut shift = 1e-14 * scale;
    let chol = loop {
        let shifted = &g + DMatrix::identity(2 * l, 2 * l) * shift;
        if let Some(c) = shifted.cholesky() {
            break c;
        }
        shift *= 100.0;
        if shift > scale {
            return Err(Error::Diverged(0));
        }
    };
    let start = DVector::from_element(2 * l, 1.0);
    let (v, _) = min_eigenpair_inverse(
        |x: &DMatrix<f64>| &g * x,
        |x: &DMatrix<f64>| chol.solve(x),
        &start,
        scale,
        &MinEigOptions::default(),
    );
    let v = v.unscale(v.norm());
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cross-relation filters"));
    }
    let h1 = v.rows(0, l).iter().copied().collect::<Vec<_>>();
    let h2 = v.rows(l, l).iter().copied().collect::<Vec<_>>();
    let residual = cr_residual(x1, x2, &h1, &h2)?;
    Ok(DiscreteFilterPair {
        h1,
        h2,
        residual,
        normalization: FilterNormalization::UnitJointNorm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoOptions {
    pub lambda: f64,
    pub max_iter: usize,
    /// Relative objective change below which iteration stops.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            max_iter: 5000,
            tol: 1e-10,
        }
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn largest_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = g * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w) / v.norm_squared();
        v = w / norm;
        if (next - lambda).abs() <= 1e-6 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// l1-penalized cross relation with `h1[0] = 1`, by monotone FISTA.
///
/// Returns the pair and the objective after every iteration.
pub fn lasso_solve_traced(
    x1: &RealSignal,
    x2: &RealSignal,
    l: usize,
    opts: &LassoOptions,
) -> Result<(DiscreteFilterPair, Vec<f64>)> {
    check_pair(x1, x2, l)?;
    if !(opts.lambda >= 0.0) || !opts.lambda.is_finite() {
        return Err(invalid("lambda must be finite and nonnegative"));
    }
    let g = cross_relation_gram(x1.samples(), x2.samples(), l);
    let dim = 2 * l;
    // Gradient of h^T G h is 2 G h; bound its Lipschitz constant.
    let lip = 2.0 * largest_eigenvalue(&g) * 1.05;
    if !(lip > 0.0) || !lip.is_finite() {
        return Err(Error::NonFinite("Lipschitz bound"));
    }
    let step = 1.0 / lip;
    let thresh = opts.lambda * step;
    let objective = |h: &DVector<f64>, gh: &DVector<f64>| {
        h.dot(gh) + opts.lambda * h.iter().skip(1).map(|v| v.abs()).sum::<f64>()
    };

    let mut x = DVector::zeros(dim);
    x[0] = 1.0;
    let mut gx = &g * &x;
    let mut fx = objective(&x, &gx);
    let (mut y, mut gy) = (x.clone(), gx.clone());
    let mut t = 1.0f64;
    let mut trace = vec![fx];
    for _ in 0..opts.max_iter {
        let mut z = &y - (&gy * (2.0 * step));
        z[0] = 1.0;
        for v in z.iter_mut().skip(1) {
            *v = soft_threshold(*v, thresh);
        }
        let gz = &g * &z;
        let fz = objective(&z, &gz);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let accepted = fz <= fx;
        let (x_new, gx_new, f_new) = if accepted {
            (z.clone(), gz.clone(), fz)
        } else {
            (x.clone(), gx.clone(), fx)
        };
        let a = t / t_next;
        let b = (t - 1.0) / t_next;
        y = &x_new + (&z - &x_new) * a + (&x_new - &x) * b;
        gy = &gx_new + (&gz - &gx_new) * a + (&gx_new - &gx) * b;
        let decrease = fx - f_new;
        x = x_new;
        gx = gx_new;
        fx = f_new;
        t = t_next;
        trace.push(fx);
        if accepted && decrease <= opts.tol * fx.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let h1 = x.rows(0, l).iter().copied().collect();
    let h2 = x.rows(l, l).iter().copied().collect();
    Ok((
        DiscreteFilterPair {
            h1,
            h2,
            residual: fx,
            normalization: FilterNormalization::FirstTapOne,
        },
        trace,
    ))
}

/// l1-penalized cross relation with `h1[0] = 1`.
pub fn lasso_solve(
    x1: &RealSignal,
    x2: &RealSignal,
    l: usize,
    opts: &LassoOptions,
) -> Result<DiscreteFilterPair> {
    lasso_solve_traced(x1, x2, l, opts).map(|(pair, _)| pair)
}

/// The `k` largest local maxima of `|filter|` as on-grid echoes at `index / fs`;
/// falls back to the `k` largest magnitudes if there are fewer local maxima.
pub fn peak_pick(filter: &[f64], k: usize, fs: f64) -> Result<EchoSet> {
    if k > filter.len() {
        return Err(invalid(format!(
            "cannot pick {k} peaks from {} taps",
            filter.len()
        )));
    }
    let mag: Vec<f64> = filter.iter().map(|v| v.abs()).collect();
    let by_magnitude = |idx: &mut Vec<usize>| {
        idx.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));
    };
    let mut peaks: Vec<usize> = (0..mag.len())
        .filter(|&n| {
            mag[n] > 0.0
                && (n == 0 || mag[n] >= mag[n - 1])
                && (n + 1 == mag.len() || mag[n] >= mag[n + 1])
        })
        .collect();
    if peaks.len() < k {
        peaks = (0..mag.len()).collect();
    }
    by_magnitude(&mut peaks);
    peaks.truncate(k);
    EchoSet::new(
        peaks.iter().map(|&n| n as f64 / fs).collect(),
        peaks.iter().map(|&n| mag[n]).collect(),
    )
}
