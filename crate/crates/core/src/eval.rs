//! Echo matching, RMSE metrics, success rates, parameter sweeps and a
//! brute-force reference solver for single-echo channels.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fri::EchoSet;
use crate::mulan::{mulan_solve, normalize_solution, restart_seed, MulanConfig};
use crate::sim::{offgrid_shoebox_scenario, OffGridConfig};
use crate::spectral::{make_frequency_grid, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Location RMSE threshold in samples; success requires strictly less.
    pub location_samples: f64,
    pub weight: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            location_samples: 1.0,
            weight: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelError {
    pub location_rmse: f64,
    pub weight_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Seconds.
    pub location_rmse: f64,
    pub weight_rmse: f64,
    pub location_success: bool,
    pub weight_success: bool,
    pub per_channel: Vec<ChannelError>,
}

/// Minimum-cost perfect matching on a square cost matrix; `result[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Shortest augmenting paths with potentials; 1-based with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost[r - 1][c - 1] - u[r] - v[c];
                if reduced < minv[c] {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for c in 1..=n {
        result[owner[c] - 1] = c - 1;
    }
    result
}

/// [`match_and_rmse_with`] under the default thresholds.
pub fn match_and_rmse(estimated: &[EchoSet], truth: &[EchoSet], fs: f64) -> Result<EvalReport> {
    match_and_rmse_with(estimated, truth, fs, &Thresholds::default())
}

/// Normalizes both sides, matches echoes per channel by minimum total squared
/// delay error and reports RMSEs over all matched pairs.
pub fn match_and_rmse_with(
    estimated: &[EchoSet],
    truth: &[EchoSet],
    fs: f64,
    thresholds: &Thresholds,
) -> Result<EvalReport> {
    if estimated.len() != truth.len() {
        return Err(Error::CardinalityMismatch(format!(
            "{} estimated channels vs {} true channels",
            estimated.len(),
            truth.len()
        )));
    }
    for (m, (e, t)) in estimated.iter().zip(truth).enumerate() {
        if e.len() != t.len() {
            return Err(Error::CardinalityMismatch(format!(
                "channel {m}: {} estimated echoes vs {} true echoes",
                e.len(),
                t.len()
            )));
        }
    }
    if !(fs > 0.0) {
        return Err(invalid("sample rate must be positive"));
    }
    let est = normalize_solution(estimated)?;
    let tru = normalize_solution(truth)?;
    let mut per_channel = Vec::with_capacity(est.len());
    let (mut loc_sq, mut w_sq, mut count) = (0.0, 0.0, 0usize);
    for (e, t) in est.iter().zip(&tru) {
        let cost: Vec<Vec<f64>> = e
            .delays()
            .iter()
            .map(|de| t.delays().iter().map(|dt| (de - dt).powi(2)).collect())
            .collect();
        let assign = min_cost_assignment(&cost);
        let (mut l, mut w) = (0.0, 0.0);
        for (i, &j) in assign.iter().enumerate() {
            l += cost[i][j];
            w += (e.weights()[i] - t.weights()[j]).powi(2);
        }
        let k = e.len().max(1) as f64;
        per_channel.push(ChannelError {
            location_rmse: (l / k).sqrt(),
            weight_rmse: (w / k).sqrt(),
        });
        loc_sq += l;
        w_sq += w;
        count += e.len();
    }
    let n = count.max(1) as f64;
    let location_rmse = (loc_sq / n).sqrt();
    let weight_rmse = (w_sq / n).sqrt();
    Ok(EvalReport {
        location_rmse,
        weight_rmse,
        location_success: location_rmse < thresholds.location_samples / fs,
        weight_success: weight_rmse < thresholds.weight,
        per_channel,
    })
}

/// Fraction of location successes, and the mean weight RMSE over those successes.
pub fn success_rate(reports: &[EvalReport]) -> Result<(f64, Option<f64>)> {
    if reports.is_empty() {
        return Err(invalid("no reports"));
    }
    let wins: Vec<&EvalReport> = reports.iter().filter(|r| r.location_success).collect();
    let rate = wins.len() as f64 / reports.len() as f64;
    let weight = if wins.is_empty() {
        None
    } else {
        Some(wins.iter().map(|r| r.weight_rmse).sum::<f64>() / wins.len() as f64)
    };
    Ok((rate, weight))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub k_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub f_values: Vec<usize>,
    pub trials_per_cell: usize,
    pub thresholds: Thresholds,
    pub f_min: f64,
    pub f_max: f64,
    pub base_seed: u64,
    /// Scenario template; channel and echo counts are overridden per cell.
    pub scenario: OffGridConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            k_values: (2..=7).collect(),
            m_values: (2..=7).collect(),
            f_values: vec![201, 401],
            trials_per_cell: 100,
            thresholds: Thresholds::default(),
            f_min: 200.0,
            f_max: 2000.0,
            base_seed: 0,
            scenario: OffGridConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.m_values.is_empty() || self.f_values.is_empty() {
            return Err(invalid("sweep value lists must be nonempty"));
        }
        if self.trials_per_cell == 0 {
            return Err(invalid("trials_per_cell must be at least 1"));
        }
        if self.k_values.iter().any(|&k| k == 0 || k > 7) {
            return Err(invalid("echo counts must lie in 1..=7"));
        }
        if self.m_values.contains(&0) {
            return Err(invalid("channel counts must be positive"));
        }
        for (&k, &f) in self
            .k_values
            .iter()
            .flat_map(|k| self.f_values.iter().map(move |f| (k, f)))
        {
            if f < 2 * k + 1 {
                return Err(invalid(format!("F = {f} is too small for K = {k}")));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for &f in &self.f_values {
            for &m in &self.m_values {
                for &k in &self.k_values {
                    cells.push(CellKey { k, m, f });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub k: usize,
    pub m: usize,
    pub f: usize,
}

/// One trial as logged by a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub k: usize,
    pub m: usize,
    pub f: usize,
    pub solver: String,
    pub location_rmse: f64,
    pub weight_rmse: f64,
    pub location_success: bool,
    pub weight_success: bool,
    pub cost: f64,
    pub iterations: usize,
    pub error: String,
}

impl TrialRecord {
    pub fn cell(&self) -> CellKey {
        CellKey {
            k: self.k,
            m: self.m,
            f: self.f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub k: usize,
    pub m: usize,
    pub f: usize,
    pub trials: usize,
    pub location_rate: f64,
    /// Fraction of trials succeeding on both locations and weights.
    pub weight_rate: f64,
    pub mean_weight_rmse: Option<f64>,
}

impl CellResult {
    pub fn key(&self) -> CellKey {
        CellKey {
            k: self.k,
            m: self.m,
            f: self.f,
        }
    }

    pub fn from_trials(key: CellKey, trials: &[TrialRecord]) -> Self {
        let n = trials.len().max(1) as f64;
        let loc: Vec<&TrialRecord> = trials.iter().filter(|t| t.location_success).collect();
        Self {
            k: key.k,
            m: key.m,
            f: key.f,
            trials: trials.len(),
            location_rate: loc.len() as f64 / n,
            weight_rate: loc.iter().filter(|t| t.weight_success).count() as f64 / n,
            mean_weight_rmse: if loc.is_empty() {
                None
            } else {
                Some(loc.iter().map(|t| t.weight_rmse).sum::<f64>() / loc.len() as f64)
            },
        }
    }
}

/// Seed of trial `trial` with `m` channels. It does not depend on `K` or
/// `F`, so cells differing only in those see the same rooms and sources.
pub fn trial_seed(base: u64, m: usize, trial: usize) -> u64 {
    restart_seed(restart_seed(base, m), trial)
}

/// Generates one off-grid scenario, runs MULAN and scores it; failures are
/// recorded as unsuccessful trials.
pub fn run_mulan_trial(
    spec: &SweepSpec,
    key: CellKey,
    seed: u64,
    solver: &MulanConfig,
) -> TrialRecord {
    let mut record = TrialRecord {
        seed,
        k: key.k,
        m: key.m,
        f: key.f,
        solver: "mulan".into(),
        location_rmse: f64::NAN,
        weight_rmse: f64::NAN,
        location_success: false,
        weight_success: false,
        cost: f64::NAN,
        iterations: 0,
        error: String::new(),
    };
    let outcome = (|| -> Result<()> {
        let cfg = OffGridConfig {
            channels: key.m,
            echoes: key.k,
            ..spec.scenario.clone()
        };
        let scenario = offgrid_shoebox_scenario(&cfg, seed)?;
        let grid = make_frequency_grid(spec.f_min, spec.f_max, key.f)?;
        let x = scenario.spectra(&grid)?;
        let solver = MulanConfig {
            rng_seed: seed,
            ..solver.clone()
        };
        let res = mulan_solve(&x, key.k, &solver)?;
        record.cost = res.final_cost;
        record.iterations = res.iterations;
        let report = match_and_rmse_with(&res.echoes, &scenario.echoes, cfg.fs, &spec.thresholds)?;
        record.location_rmse = report.location_rmse;
        record.weight_rmse = report.weight_rmse;
        record.location_success = report.location_success;
        record.weight_success = report.weight_success;
        Ok(())
    })();
    if let Err(e) = outcome {
        record.error = e.to_string();
    }
    record
}

/// Runs every cell not rejected by `skip`, calling `on_cell` as each finishes.
pub fn run_sweep(
    spec: &SweepSpec,
    solver: &MulanConfig,
    skip: impl Fn(&CellKey) -> bool,
    mut on_cell: impl FnMut(&CellResult, &[TrialRecord]) -> Result<()>,
) -> Result<Vec<CellResult>> {
    spec.validate()?;
    solver.validate()?;
    let mut results = Vec::new();
    for key in spec.cells() {
        if skip(&key) {
            continue;
        }
        let trials: Vec<TrialRecord> = (0..spec.trials_per_cell)
            .into_par_iter()
            .map(|t| run_mulan_trial(spec, key, trial_seed(spec.base_seed, key.m, t), solver))
            .collect();
        let cell = CellResult::from_trials(key, &trials);
        on_cell(&cell, &trials)?;
        results.push(cell);
    }
    Ok(results)
}

/// Appends trial rows to a CSV file, writing the header only for a new file.
pub fn append_trials_csv(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    for t in trials {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Cells that already have `trials_per_cell` rows in a trial log.
pub fn completed_cells(trials: &[TrialRecord], trials_per_cell: usize) -> BTreeSet<CellKey> {
    let mut counts = std::collections::BTreeMap::new();
    for t in trials {
        *counts.entry(t.cell()).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .filter(|(_, n)| *n >= trials_per_cell)
        .map(|(k, _)| k)
        .collect()
}

/// Reference solution for one echo per channel by exhaustive search.
///
/// For every channel `m > 1` the delay difference `d` to channel 1 is
/// searched on a grid of spacing `resolution` over one delay period,
/// minimizing `min_alpha sum_f |x_m(f) - alpha e^{-2 pi i f d} x_1(f)|^2`,
/// then refined by golden-section search within one grid step. Channel 1 is
/// returned as the reference echo `(0, 1)`.
pub fn brute_force_oracle_k1(x: &[Spectrum], resolution: f64) -> Result<Vec<EchoSet>> {
    let first = x
        .first()
        .ok_or_else(|| invalid("need at least one channel"))?;
    for xm in &x[1..] {
        xm.check_same_grid(first)?;
    }
    if !(resolution > 0.0) {
        return Err(invalid("resolution must be positive"));
    }
    let grid = *first.grid();
    let period = grid.delay_period();
    let energy = first.norm_sqr();
    if energy == 0.0 {
        return Err(invalid("reference channel is zero"));
    }
    let half = (period / 2.0 / resolution).floor() as i64;
    let mut out = vec![EchoSet::new(vec![0.0], vec![1.0])?];
    for xm in &x[1..] {
        let w: Vec<Complex64> = first
            .values()
            .iter()
            .zip(xm.values())
            .map(|(a, b)| a.conj() * b)
            .collect();
        // |sum_i w_i e^{2 pi i f_i d}| = |sum_i w_i rho^i| with rho = e^{2 pi i step d}.
        let score = |d: f64| {
            let rho = Complex64::from_polar(1.0, 2.0 * PI * grid.step() * d);
            w.iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, wi| acc * rho + wi)
                .norm()
        };
        let (best_j, _) = (-half..=half)
            .into_par_iter()
            .map(|j| (j, score(j as f64 * resolution)))
            .reduce(
                || (0, f64::NEG_INFINITY),
                |a, b| {
                    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                        b
                    } else {
                        a
                    }
                },
            );
        let (mut lo, mut hi) = (
            (best_j - 1) as f64 * resolution,
            (best_j + 1) as f64 * resolution,
        );
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if score(a) >= score(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let delay = (lo + hi) / 2.0;
        let rho_f = |f: f64| Complex64::from_polar(1.0, -2.0 * PI * f * delay);
        let alpha: Complex64 = grid
            .frequencies()
            .zip(first.values().iter().zip(xm.values()))
            .map(|(f, (a, b))| (rho_f(f) * a).conj() * b)
            .sum::<Complex64>()
            / energy;
        out.push(EchoSet::new(vec![delay], vec![alpha.norm()])?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FrequencyGrid;
    use proptest::strategy::Strategy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn assignment_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=5 {
            for _ in 0..20 {
                let cost: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
                    .collect();
                let a = min_cost_assignment(&cost);
                let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
                let best = permutations(n)
                    .iter()
                    .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                assert!((total - best).abs() < 1e-12);
                let mut seen = a.clone();
                seen.sort();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }
    }

    fn truth() -> Vec<EchoSet> {
        vec![
            EchoSet::new(
                vec![0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007],
                vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
            )
            .unwrap(),
            EchoSet::new(
                vec![0.0015, 0.0025, 0.0035, 0.0045, 0.0055, 0.0065, 0.0075],
                vec![0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6],
            )
            .unwrap(),
        ]
    }

    #[test]
    fn identical_sets_score_zero() {
        let r = match_and_rmse(&truth(), &truth(), 16000.0).unwrap();
        assert_eq!(r.location_rmse, 0.0);
        assert_eq!(r.weight_rmse, 0.0);
        assert!(r.location_success && r.weight_success);
        assert_eq!(r.per_channel.len(), 2);
    }

    #[test]
    fn single_delay_error_arithmetic() {
        let fs = 16000.0;
        let t = truth();
        let mut d = t[1].delays().to_vec();
        d[3] += 2.0 / fs;
        let est = vec![
            t[0].clone(),
            EchoSet::new(d, t[1].weights().to_vec()).unwrap(),
        ];
        let r = match_and_rmse(&est, &t, fs).unwrap();
        assert!((r.location_rmse - 2.0 / (fs * 14f64.sqrt())).abs() < 1e-15);
        assert!(r.location_success);
    }

    #[test]
    fn invariant_to_shift_scale_and_order() {
        let t = truth();
        let moved: Vec<EchoSet> = t
            .iter()
            .map(|e| e.shifted_scaled(-0.01, 0.25).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noisy: Vec<EchoSet> = t
            .iter()
            .map(|e| {
                EchoSet::new(
                    e.delays()
                        .iter()
                        .map(|d| d + rng.random_range(-1e-5..1e-5))
                        .collect(),
                    e.weights().to_vec(),
                )
                .unwrap()
            })
            .collect();
        let a = match_and_rmse(&noisy, &t, 16000.0).unwrap();
        let b = match_and_rmse(&noisy, &moved, 16000.0).unwrap();
        assert!((a.location_rmse - b.location_rmse).abs() < 1e-15);
        assert!((a.weight_rmse - b.weight_rmse).abs() < 1e-12);
        let err = match_and_rmse(&t[..1], &t, 16000.0);
        assert!(matches!(err, Err(Error::CardinalityMismatch(_))));
        let short = vec![t[0].clone(), EchoSet::new(vec![0.0], vec![1.0]).unwrap()];
        assert!(matches!(
            match_and_rmse(&short, &t, 16000.0),
            Err(Error::CardinalityMismatch(_))
        ));
    }

    #[test]
    fn threshold_is_strict() {
        let fs = 16000.0;
        let t = vec![EchoSet::new(vec![0.0, 0.01], vec![1.0, 0.5]).unwrap()];
        // One of two delays off by sqrt(2) samples gives an RMSE of exactly one sample.
        let off = 2f64.sqrt() / fs;
        let est = vec![EchoSet::new(vec![0.0, 0.01 + off], vec![1.0, 0.5]).unwrap()];
        let r = match_and_rmse(&est, &t, fs).unwrap();
        let th = Thresholds {
            location_samples: r.location_rmse * fs,
            ..Default::default()
        };
        assert!(
            !match_and_rmse_with(&est, &t, fs, &th)
                .unwrap()
                .location_success
        );
    }

    fn report(success: bool, w: f64) -> EvalReport {
        EvalReport {
            location_rmse: 0.0,
            weight_rmse: w,
            location_success: success,
            weight_success: w < 1e-2,
            per_channel: vec![],
        }
    }

    #[test]
    fn success_rates() {
        assert_eq!(
            success_rate(&[report(true, 0.0), report(true, 0.0)]).unwrap(),
            (1.0, Some(0.0))
        );
        assert_eq!(success_rate(&[report(false, 0.3)]).unwrap(), (0.0, None));
        let mut many: Vec<EvalReport> = (0..70).map(|_| report(true, 0.002)).collect();
        many.extend((0..30).map(|_| report(false, 5.0)));
        let (rate, w) = success_rate(&many).unwrap();
        assert!((rate - 0.7).abs() < 1e-15);
        assert!((w.unwrap() - 0.002).abs() < 1e-15);
        assert!(success_rate(&[]).is_err());
    }

    fn k1_spectra(delays: &[f64], weights: &[f64], seed: u64) -> Vec<Spectrum> {
        let grid = FrequencyGrid::new(200.0, 4.5, 401).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<Complex64> = (0..401)
            .map(|_| Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-PI..PI)))
            .collect();
        delays
            .iter()
            .zip(weights)
            .map(|(&d, &c)| {
                Spectrum::new(
                    grid.frequencies()
                        .zip(&s)
                        .map(|(f, sv)| Complex64::from_polar(c, -2.0 * PI * f * d) * sv)
                        .collect(),
                    grid,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn oracle_finds_offgrid_delay() {
        let x = k1_spectra(&[0.00312, 0.01771, 0.00044], &[0.8, 0.4, 0.6], 3);
        let est = brute_force_oracle_k1(&x, 1e-6).unwrap();
        assert!((est[1].delays()[0] - (0.01771 - 0.00312)).abs() < 1e-6);
        assert!((est[2].delays()[0] - (0.00044 - 0.00312)).abs() < 1e-6);
        assert!((est[1].weights()[0] - 0.5).abs() < 1e-6);
        assert_eq!(est[0].delays(), &[0.0]);
    }

    #[test]
    fn oracle_on_identical_channels() {
        let x = k1_spectra(&[0.01, 0.01], &[1.0, 1.0], 4);
        let est = brute_force_oracle_k1(&x, 1e-6).unwrap();
        assert!(est[1].delays()[0].abs() < 1e-9);
    }

    #[test]
    fn sweep_spec_validation() {
        let mut s = SweepSpec::default();
        s.validate().unwrap();
        assert_eq!(s.cells().len(), 72);
        s.k_values.clear();
        assert!(s.validate().is_err());
        let s = SweepSpec {
            trials_per_cell: 0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn trial_seeds_pair_across_k_and_f() {
        assert_eq!(trial_seed(5, 2, 3), trial_seed(5, 2, 3));
        assert_ne!(trial_seed(5, 2, 3), trial_seed(5, 2, 4));
        assert_ne!(trial_seed(5, 2, 3), trial_seed(5, 3, 3));
    }

    #[test]
    fn single_trial_sweep_is_deterministic() {
        let spec = SweepSpec {
            k_values: vec![1],
            m_values: vec![2],
            f_values: vec![201],
            trials_per_cell: 1,
            base_seed: 9,
            ..Default::default()
        };
        let solver = MulanConfig {
            n_restarts: 2,
            ..Default::default()
        };
        let mut logged = Vec::new();
        let a = run_sweep(
            &spec,
            &solver,
            |_| false,
            |_, t| {
                logged.extend_from_slice(t);
                Ok(())
            },
        )
        .unwrap();
        let b = run_sweep(&spec, &solver, |_| false, |_, _| Ok(())).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].location_rate, 1.0);
        assert_eq!(logged.len(), 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.csv");
        append_trials_csv(&path, &logged).unwrap();
        append_trials_csv(&path, &logged).unwrap();
        let back = read_trials_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].seed, logged[0].seed);
        let done = completed_cells(&back, 1);
        assert!(done.contains(&CellKey { k: 1, m: 2, f: 201 }));
        let skipped = run_sweep(&spec, &solver, |k| done.contains(k), |_, _| Ok(())).unwrap();
        assert!(skipped.is_empty());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn rmse_ignores_shift_scale_and_listing_order(
            seed in 0u64..100_000,
            shift in -0.02f64..0.02,
            scale in 0.05f64..20.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = truth();
            let est: Vec<EchoSet> = t
                .iter()
                .map(|e| {
                    let (mut d, mut w): (Vec<f64>, Vec<f64>) = e
                        .iter()
                        .map(|(d, w)| (d + rng.random_range(-2e-5..2e-5), w * rng.random_range(0.98..1.02)))
                        .unzip();
                    d.reverse();
                    w.reverse();
                    EchoSet::new(d, w).unwrap()
                })
                .collect();
            let moved: Vec<EchoSet> = est.iter().map(|e| e.shifted_scaled(shift, scale).unwrap()).collect();
            let a = match_and_rmse(&est, &t, 16000.0).unwrap();
            let b = match_and_rmse(&moved, &t, 16000.0).unwrap();
            proptest::prop_assert!((a.location_rmse - b.location_rmse).abs() <= 1e-12);
            proptest::prop_assert!((a.weight_rmse - b.weight_rmse).abs() <= 1e-10);
        }

        #[test]
        fn assignment_is_a_permutation_no_worse_than_identity(
            cost in (1usize..7).prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, n), n)),
        ) {
            let p = min_cost_assignment(&cost);
            let n = cost.len();
            let mut seen = vec![false; n];
            for &j in &p {
                proptest::prop_assert!(j < n && !seen[j]);
                seen[j] = true;
            }
            let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            let identity: f64 = (0..n).map(|i| cost[i][i]).sum();
            proptest::prop_assert!(total <= identity + 1e-12);
        }
    }
}
