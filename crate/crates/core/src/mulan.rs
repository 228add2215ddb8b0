//! Blind echo retrieval by multichannel annihilation.
//!
//! Alternates between per-channel annihilating filters and the common
//! Fourier-inverted source `z`, minimizing
//! `C(z, a) = sum_m |Toep(x_m . z) a_m|^2` under unit-norm constraints on
//! `z` and every `a_m`. Several random starts are run and the lowest final
//! cost wins.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fri::{check_frequency_count, echoes_from_filter, EchoSet};
use crate::linalg::{
    banded_min_right_singular_vector, min_right_singular_vector, toeplitz_full, toeplitz_zero,
    AnnihilatingFilter, BandedRows, ComplexMatrix, MinEigOptions,
};
use crate::spectral::{FrequencyGrid, Spectrum};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MulanConfig {
    pub n_restarts: usize,
    pub max_iter: usize,
    /// Stop once the cost decreases by less than this fraction in one iteration.
    pub conv_thresh: f64,
    pub rng_seed: u64,
    /// Project filter roots onto the unit circle after every filter update.
    pub renormalize_root_modulus: bool,
}

impl Default for MulanConfig {
    fn default() -> Self {
        Self {
            n_restarts: 20,
            max_iter: 1000,
            conv_thresh: 1e-3,
            rng_seed: 0,
            renormalize_root_modulus: false,
        }
    }
}

impl MulanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_restarts == 0 {
            return Err(invalid("n_restarts must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        if !(self.conv_thresh > 0.0 && self.conv_thresh < 1.0) {
            return Err(invalid(format!(
                "conv_thresh must lie in (0, 1), got {}",
                self.conv_thresh
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Per-channel echoes after the shift/scale convention is applied.
    pub echoes: Vec<EchoSet>,
    pub z_estimate: Spectrum,
    pub filters: Vec<AnnihilatingFilter>,
    pub final_cost: f64,
    pub iterations: usize,
    pub best_restart: usize,
    /// Cost after every half-step of the winning restart.
    pub history: Vec<f64>,
}

/// `sum_m |Toep(x_m . z) a_m|^2`.
pub fn mulan_cost(z: &Spectrum, filters: &[AnnihilatingFilter], x: &[Spectrum]) -> Result<f64> {
    if filters.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} filters for {} channels",
            filters.len(),
            x.len()
        )));
    }
    let order = filters.first().map(|a| a.order()).unwrap_or(0);
    let mut total = 0.0;
    for (a, xm) in filters.iter().zip(x) {
        xm.check_same_grid(z)?;
        if a.order() != order {
            return Err(Error::DimensionMismatch("filters differ in length".into()));
        }
        if a.coeffs().len() > xm.len() {
            return Err(Error::DimensionMismatch(
                "filter longer than the frequency grid".into(),
            ));
        }
        total += channel_residual(a, xm.values(), z.values());
    }
    Ok(total)
}

fn channel_residual(a: &AnnihilatingFilter, x: &[Complex64], z: &[Complex64]) -> f64 {
    let taps = a.coeffs();
    let k = taps.len() - 1;
    (0..x.len() - k)
        .map(|n| {
            taps.iter()
                .enumerate()
                .map(|(j, &aj)| {
                    let i = k + n - j;
                    aj * x[i] * z[i]
                })
                .sum::<Complex64>()
                .norm_sqr()
        })
        .sum()
}

fn check_channels(x: &[Spectrum]) -> Result<FrequencyGrid> {
    let first = x
        .first()
        .ok_or_else(|| invalid("need at least one channel"))?;
    for xm in &x[1..] {
        xm.check_same_grid(first)?;
    }
    Ok(*first.grid())
}

/// Filter step: each `a_m` becomes the minimum right singular vector of `Toep(x_m . z)`.
pub fn update_filters(z: &Spectrum, x: &[Spectrum], k: usize) -> Result<Vec<AnnihilatingFilter>> {
    check_channels(x)?;
    check_frequency_count(z.len(), k)?;
    x.iter()
        .map(|xm| {
            let h = xm.hadamard(z)?;
            let t = toeplitz_full(h.values(), k + 1)?;
            let (v, _) = min_right_singular_vector(&t)?;
            AnnihilatingFilter::new(v.iter().copied().collect())
        })
        .collect()
}

/// The stacked matrix `Q = [Toep0(a_1) Diag(x_1); ...; Toep0(a_M) Diag(x_M)]`
/// with `C(z, a) = |Q z|^2`, of shape `M (F - K) x F`.
pub fn z_system_matrix(filters: &[AnnihilatingFilter], x: &[Spectrum]) -> Result<ComplexMatrix> {
    let grid = check_channels(x)?;
    if filters.len() != x.len() {
        return Err(Error::DimensionMismatch(
            "one filter per channel required".into(),
        ));
    }
    let f = grid.count();
    let blocks = filters
        .iter()
        .zip(x)
        .map(|(a, xm)| {
            let t0 = toeplitz_zero(a.coeffs(), f)?;
            Ok(t0 * ComplexMatrix::from_diagonal(&DVector::from_column_slice(xm.values())))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut q = ComplexMatrix::zeros(rows, f);
    let mut r0 = 0;
    for b in blocks {
        q.rows_mut(r0, b.nrows()).copy_from(&b);
        r0 += b.nrows();
    }
    Ok(q)
}

/// Rows of `Q` interleaved across channels, each holding `K + 1` entries.
fn z_system_rows(filters: &[AnnihilatingFilter], x: &[Spectrum]) -> BandedRows {
    let f = x[0].len();
    let k = filters[0].order();
    let mut q = BandedRows::new(f, k + 1);
    let mut row = vec![Complex64::new(0.0, 0.0); k + 1];
    // Row n of Toep0(a) holds a[K - c] at column n + c.
    for n in 0..f - k {
        for (a, xm) in filters.iter().zip(x) {
            let taps = a.coeffs();
            let xv = xm.values();
            for (c, v) in row.iter_mut().enumerate() {
                *v = taps[k - c] * xv[n + c];
            }
            q.push_row(n, &row);
        }
    }
    q
}

fn z_eig_options() -> MinEigOptions {
    MinEigOptions {
        block: 4,
        max_iter: 50,
        tol: 1e-9,
    }
}

/// z step: unit-norm minimizer of `|Q z|`.
pub fn update_z(filters: &[AnnihilatingFilter], x: &[Spectrum]) -> Result<Spectrum> {
    let grid = check_channels(x)?;
    let start = vec![Complex64::new(1.0, 0.0); grid.count()];
    update_z_from(filters, x, &start)
}

/// z step warm-started at `start`; the result never has a higher cost than `start`.
pub fn update_z_from(
    filters: &[AnnihilatingFilter],
    x: &[Spectrum],
    start: &[Complex64],
) -> Result<Spectrum> {
    let grid = check_channels(x)?;
    if filters.len() != x.len() {
        return Err(Error::DimensionMismatch(
            "one filter per channel required".into(),
        ));
    }
    if start.len() != grid.count() {
        return Err(Error::DimensionMismatch("start vector length".into()));
    }
    let k = filters[0].order();
    if filters.iter().any(|a| a.order() != k) || k >= grid.count() {
        return Err(Error::DimensionMismatch(
            "inconsistent filter lengths".into(),
        ));
    }
    let q = z_system_rows(filters, x);
    let (v, _) = banded_min_right_singular_vector(&q, start, &z_eig_options());
    Spectrum::new(v.iter().copied().collect(), grid)
}

fn random_unit_z(grid: FrequencyGrid, rng: &mut ChaCha8Rng) -> Result<Spectrum> {
    // Circular complex Gaussian: real and imaginary parts N(0, 1/2).
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid sigma");
    let v: Vec<Complex64> = (0..grid.count())
        .map(|_| Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    Spectrum::new(v.into_iter().map(|c| c / norm).collect(), grid)
}

/// Per-restart seed, independent of execution order.
pub fn restart_seed(base: u64, restart: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base
        ^ (restart as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn project_roots_to_unit_circle(a: AnnihilatingFilter) -> Result<AnnihilatingFilter> {
    let ratios: Vec<Complex64> = a
        .ratios()?
        .into_iter()
        .map(|r| if r.norm() > 0.0 { r / r.norm() } else { r })
        .collect();
    AnnihilatingFilter::from_ratios(&ratios)
}

struct RestartRun {
    z: Spectrum,
    filters: Vec<AnnihilatingFilter>,
    cost: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn run_restart(x: &[Spectrum], k: usize, config: &MulanConfig, seed: u64) -> Result<RestartRun> {
    let grid = *x[0].grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = random_unit_z(grid, &mut rng)?;
    let mut history = Vec::with_capacity(2 * config.max_iter.min(256));
    let mut prev: Option<f64> = None;
    let mut filters = Vec::new();
    let mut cost = f64::INFINITY;
    let mut iterations = 0;
    for iter in 1..=config.max_iter {
        iterations = iter;
        filters = update_filters(&z, x, k)?;
        if config.renormalize_root_modulus {
            filters = filters
                .into_iter()
                .map(project_roots_to_unit_circle)
                .collect::<Result<_>>()?;
        }
        history.push(mulan_cost(&z, &filters, x)?);
        z = update_z_from(&filters, x, z.values())?;
        cost = mulan_cost(&z, &filters, x)?;
        history.push(cost);
        if !cost.is_finite() {
            break;
        }
        if let Some(p) = prev {
            if (p - cost) / p.max(1e-300) < config.conv_thresh {
                break;
            }
        }
        prev = Some(cost);
    }
    Ok(RestartRun {
        z,
        filters,
        cost,
        iterations,
        history,
    })
}

/// Runs the alternating minimization from `n_restarts` random starts and
/// extracts echoes from the lowest-cost run.
pub fn mulan_solve(x: &[Spectrum], k: usize, config: &MulanConfig) -> Result<SolveResult> {
    config.validate()?;
    let grid = check_channels(x)?;
    check_frequency_count(grid.count(), k)?;
    if let Some(m) = x.iter().position(|xm| xm.norm_sqr() == 0.0) {
        return Err(Error::SilentChannel(m));
    }

    let runs: Vec<(usize, Result<RestartRun>)> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            (
                r,
                run_restart(x, k, config, restart_seed(config.rng_seed, r)),
            )
        })
        .collect();

    let mut best: Option<(usize, RestartRun)> = None;
    for (r, run) in runs {
        let Ok(run) = run else { continue };
        if !run.cost.is_finite() {
            continue;
        }
        // Strict comparison keeps the lowest index on ties.
        if best.as_ref().is_none_or(|(_, b)| run.cost < b.cost) {
            best = Some((r, run));
        }
    }
    let (best_restart, run) = best.ok_or(Error::Diverged(config.n_restarts))?;

    let raw = extract_echoes(&run.z, &run.filters, x)?;
    let echoes = normalize_solution_periodic(&raw, grid.delay_period())?;
    Ok(SolveResult {
        echoes,
        z_estimate: run.z,
        filters: run.filters,
        final_cost: run.cost,
        iterations: run.iterations,
        best_restart,
        history: run.history,
    })
}

/// Per-channel roots, delays and weights from filters and `h_m = x_m . z`.
pub fn extract_echoes(
    z: &Spectrum,
    filters: &[AnnihilatingFilter],
    x: &[Spectrum],
) -> Result<Vec<EchoSet>> {
    filters
        .iter()
        .zip(x)
        .map(|(a, xm)| echoes_from_filter(a, &xm.hadamard(z)?))
        .collect()
}

/// Applies the convention `tau_{1,1} = 0`, `c_{1,1} = 1`: every delay is
/// shifted by the earliest delay of the first channel and every weight is
/// divided by that echo's weight.
pub fn normalize_solution(echoes: &[EchoSet]) -> Result<Vec<EchoSet>> {
    let (shift, scale) = reference_echo(echoes, |e| e.delays()[0], |e| e.weights()[0])?;
    echoes
        .iter()
        .map(|e| e.shifted_scaled(shift, scale))
        .collect()
}

/// Same convention for delays known only modulo `period`.
///
/// The first channel's earliest echo is the one following the largest
/// circular gap between its delays; after shifting, delays are wrapped into
/// `[-period / 2, period / 2)`.
pub fn normalize_solution_periodic(echoes: &[EchoSet], period: f64) -> Result<Vec<EchoSet>> {
    if !(period > 0.0) {
        return Err(invalid("period must be positive"));
    }
    let first = echoes
        .first()
        .filter(|e| !e.is_empty())
        .ok_or_else(|| invalid("first channel has no echoes"))?;
    let d: Vec<f64> = first
        .delays()
        .iter()
        .map(|t| t.rem_euclid(period))
        .collect();
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let mut lead = order[0];
    let mut widest = f64::NEG_INFINITY;
    for (i, &cur) in order.iter().enumerate() {
        let prev = order[(i + order.len() - 1) % order.len()];
        let gap = (d[cur] - d[prev]).rem_euclid(period);
        let gap = if order.len() == 1 { period } else { gap };
        if gap > widest {
            widest = gap;
            lead = cur;
        }
    }
    let shift = first.delays()[lead];
    let scale = first.weights()[lead];
    if !(scale > 0.0) {
        return Err(Error::ZeroReferenceWeight);
    }
    let wrap = |t: f64| (t - shift + period / 2.0).rem_euclid(period) - period / 2.0;
    echoes
        .iter()
        .map(|e| {
            EchoSet::new(
                e.delays().iter().map(|&t| wrap(t)).collect(),
                e.weights().iter().map(|w| w / scale).collect(),
            )
        })
        .collect()
}

fn reference_echo(
    echoes: &[EchoSet],
    delay: impl Fn(&EchoSet) -> f64,
    weight: impl Fn(&EchoSet) -> f64,
) -> Result<(f64, f64)> {
    let first = echoes
        .first()
        .filter(|e| !e.is_empty())
        .ok_or_else(|| invalid("first channel has no echoes"))?;
    let scale = weight(first);
    if !(scale > 0.0) {
        return Err(Error::ZeroReferenceWeight);
    }
    Ok((delay(first), scale))
}
