use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use mulan::baseline::{cr_solve, lasso_solve};
use mulan::eval::{
    append_trials_csv, completed_cells, match_and_rmse, read_trials_csv, run_sweep, success_rate,
    CellResult, EvalReport, TrialRecord,
};
use mulan::mulan::normalize_solution;
use mulan::sim::{
    offgrid_shoebox_scenario, ongrid_scenario, read_wav_mono, render_offgrid, EchoScenario,
    GridType,
};
use mulan::spectral::generalized_dft;
use mulan::{mulan_solve, RealSignal};

use crate::config::{Method, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    echoes_from_json, echoes_to_json, read_json, read_measurements, write_json, write_measurements,
    ResultFile, TruthFile,
};

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn build_scenario(cfg: &RunConfig) -> CliResult<EchoScenario> {
    let s = &cfg.scenario;
    match s.kind {
        GridType::OnGrid => {
            if s.source_wav.is_some() {
                return Err(CliError::Config(
                    "source_wav is only supported for off-grid scenarios".into(),
                ));
            }
            Ok(ongrid_scenario(&s.ongrid(), s.seed)?)
        }
        GridType::OffGrid => {
            let mut scenario = offgrid_shoebox_scenario(&s.offgrid(), s.seed)?;
            if let Some(path) = &s.source_wav {
                // Keep the recorded source inside the span the echoes leave free.
                let active = s.n - (scenario.filter_len - 1) - s.guard;
                let mut samples = read_wav_mono(path, s.fs)?.into_samples();
                samples.resize(active, 0.0);
                let source = RealSignal::new(samples, s.fs)?;
                scenario.measurements = render_offgrid(&source, &scenario.echoes, s.n)?;
                scenario.source = source;
            }
            Ok(scenario)
        }
    }
}

/// Writes measurements and ground truth for the configured scenario.
pub fn simulate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let hash = cfg.hash();
    let scenario = build_scenario(cfg)?;
    ensure_dir(&cfg.output.dir)?;
    let meas = cfg.out_path(&cfg.output.measurements);
    write_measurements(&meas, &scenario.measurements, &hash)?;
    let truth_path = cfg.out_path(&cfg.output.truth);
    let truth = TruthFile {
        config_hash: hash,
        seed: cfg.scenario.seed,
        grid_type: scenario.grid_type,
        sample_rate: scenario.sample_rate(),
        filter_len: scenario.filter_len,
        weight_scale: scenario.weight_scale,
        channels: echoes_to_json(&scenario.echoes),
    };
    write_json(&truth_path, &truth)?;
    Ok(vec![meas, truth_path])
}

/// Runs the configured solver on a measurement file and writes the result JSON.
pub fn solve(cfg: &RunConfig, input: Option<&Path>) -> CliResult<ResultFile> {
    let hash = cfg.hash();
    let input = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path(&cfg.output.measurements));
    let (x, measurement_hash) = read_measurements(&input)?;
    let fs = x[0].sample_rate();
    let k = cfg.solver.echoes.unwrap_or(cfg.scenario.echoes);
    let start = Instant::now();
    let method = cfg.solver.method;
    let (echoes, cost, iterations, best_restart, filters) = match method {
        Method::Mulan => {
            let grid = cfg.analysis.grid()?;
            grid.check_nyquist(fs)?;
            let spectra = x
                .iter()
                .map(|xm| generalized_dft(xm, &grid))
                .collect::<mulan::Result<Vec<_>>>()?;
            let res = mulan_solve(&spectra, k, &cfg.solver.mulan(cfg.scenario.seed))?;
            (
                res.echoes,
                res.final_cost,
                res.iterations,
                Some(res.best_restart),
                None,
            )
        }
        Method::Cr | Method::Lasso => {
            let l = cfg.solver.filter_len.ok_or_else(|| {
                CliError::Config(format!(
                    "solver.filter_len is required for method {}",
                    method.name()
                ))
            })?;
            if x.len() != 2 {
                return Err(CliError::Usage(format!(
                    "method {} needs exactly 2 channels, got {}",
                    method.name(),
                    x.len()
                )));
            }
            let pair = if method == Method::Cr {
                cr_solve(&x[0], &x[1], l)?
            } else {
                lasso_solve(&x[0], &x[1], l, &cfg.solver.lasso())?
            };
            let echoes = normalize_solution(&pair.echoes(k, fs)?)?;
            (echoes, pair.residual, 0, None, Some(vec![pair.h1, pair.h2]))
        }
    };
    let result = ResultFile {
        config_hash: hash,
        measurement_hash,
        method: method.name().into(),
        sample_rate: fs,
        echoes: echoes_to_json(&echoes),
        cost,
        iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        best_restart,
        filters,
    };
    ensure_dir(&cfg.output.dir)?;
    write_json(&cfg.out_path(&cfg.output.result), &result)?;
    Ok(result)
}

#[derive(Debug, Serialize)]
struct PairReport {
    truth: PathBuf,
    result: PathBuf,
    method: String,
    report: EvalReport,
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    config_hash: String,
    pairs: Vec<PairReport>,
    location_success_rate: f64,
    mean_weight_rmse_over_successes: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalRow<'a> {
    truth: &'a Path,
    result: &'a Path,
    method: &'a str,
    location_rmse: f64,
    weight_rmse: f64,
    location_success: bool,
    weight_success: bool,
    config_hash: &'a str,
}

/// Scores result files against truth files pairwise. Returns the summary line.
pub fn eval(cfg: &RunConfig, truths: &[PathBuf], results: &[PathBuf]) -> CliResult<String> {
    if truths.is_empty() || truths.len() != results.len() {
        return Err(CliError::Usage(format!(
            "need matching truth and result lists, got {} and {}",
            truths.len(),
            results.len()
        )));
    }
    let hash = cfg.hash();
    let mut pairs = Vec::with_capacity(truths.len());
    for (tp, rp) in truths.iter().zip(results) {
        let truth: TruthFile = read_json(tp)?;
        let result: ResultFile = read_json(rp)?;
        let report = match_and_rmse(
            &echoes_from_json(&result.echoes)?,
            &echoes_from_json(&truth.channels)?,
            truth.sample_rate,
        )
        .map_err(|e| CliError::format(rp, e))?;
        pairs.push(PairReport {
            truth: tp.clone(),
            result: rp.clone(),
            method: result.method,
            report,
        });
    }
    let reports: Vec<EvalReport> = pairs.iter().map(|p| p.report.clone()).collect();
    let (rate, mean_w) = success_rate(&reports)?;

    ensure_dir(&cfg.output.dir)?;
    let csv_path = cfg.out_path(&cfg.output.eval_csv);
    let fresh = !csv_path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&csv_path)
        .map_err(|e| CliError::io(&csv_path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    for p in &pairs {
        w.serialize(EvalRow {
            truth: &p.truth,
            result: &p.result,
            method: &p.method,
            location_rmse: p.report.location_rmse,
            weight_rmse: p.report.weight_rmse,
            location_success: p.report.location_success,
            weight_success: p.report.weight_success,
            config_hash: &hash,
        })
        .map_err(|e| CliError::format(&csv_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;

    let wins = reports.iter().filter(|r| r.location_success).count();
    let line = format!(
        "location success {wins}/{} ({:.1}%), mean weight RMSE over successes {}",
        reports.len(),
        100.0 * rate,
        mean_w.map_or("n/a".into(), |w| format!("{w:.3e}"))
    );
    write_json(
        &cfg.out_path(&cfg.output.report),
        &EvalSummary {
            config_hash: hash,
            pairs,
            location_success_rate: rate,
            mean_weight_rmse_over_successes: mean_w,
        },
    )?;
    Ok(line)
}

#[derive(Debug, Serialize)]
struct BenchSummary<'a> {
    config_hash: String,
    cells: &'a [CellResult],
}

const TRIALS_CSV: &str = "trials.csv";
const BENCH_KEY: &str = "bench.key";

/// Runs the configured sweep, skipping cells already complete in the trial log.
pub fn bench(cfg: &RunConfig, mut progress: impl FnMut(&CellResult)) -> CliResult<Vec<CellResult>> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("bench needs a [sweep] section".into()))?;
    let solver = cfg.solver.mulan(spec.base_seed);
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;

    // Trials from a different sweep or solver must not be mixed in.
    let key = hex::encode(Sha256::digest(
        serde_json::to_vec(&(spec, &solver)).expect("sweep serializes"),
    ));
    let key_path = dir.join(BENCH_KEY);
    let trials_path = dir.join(TRIALS_CSV);
    if trials_path.exists() {
        let old = std::fs::read_to_string(&key_path).unwrap_or_default();
        if old.trim() != key {
            return Err(CliError::Usage(format!(
                "{} holds trials of a different sweep; use another output directory",
                trials_path.display()
            )));
        }
    }
    std::fs::write(&key_path, &key).map_err(|e| CliError::io(&key_path, e))?;

    let existing = if trials_path.exists() {
        read_trials_csv(&trials_path).map_err(|e| CliError::format(&trials_path, e))?
    } else {
        Vec::new()
    };
    let done = completed_cells(&existing, spec.trials_per_cell);
    run_sweep(
        spec,
        &solver,
        |k| done.contains(k),
        |cell, trials| {
            append_trials_csv(&trials_path, trials)?;
            progress(cell);
            Ok(())
        },
    )?;

    let all = read_trials_csv(&trials_path).map_err(|e| CliError::format(&trials_path, e))?;
    let mut by_cell: BTreeMap<_, Vec<TrialRecord>> = BTreeMap::new();
    for t in all {
        by_cell.entry(t.cell()).or_default().push(t);
    }
    let cells: Vec<CellResult> = spec
        .cells()
        .into_iter()
        .filter_map(|k| by_cell.get(&k).map(|t| CellResult::from_trials(k, t)))
        .collect();
    write_cells(
        dir,
        spec.k_values.as_slice(),
        spec.m_values.as_slice(),
        &cells,
    )?;
    write_json(
        &dir.join("summary.json"),
        &BenchSummary {
            config_hash: cfg.hash(),
            cells: &cells,
        },
    )?;
    Ok(cells)
}

fn write_cells(dir: &Path, ks: &[usize], ms: &[usize], cells: &[CellResult]) -> CliResult<()> {
    let path = dir.join("cells.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::format(&path, e))?;
    for c in cells {
        w.serialize(c).map_err(|e| CliError::format(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let mut fs: Vec<usize> = cells.iter().map(|c| c.f).collect();
    fs.sort_unstable();
    fs.dedup();
    for f in fs {
        for (label, pick) in [
            (
                "location",
                (|c: &CellResult| c.location_rate) as fn(&CellResult) -> f64,
            ),
            ("weight", |c: &CellResult| c.weight_rate),
        ] {
            let path = dir.join(format!("{label}_rates_F{f}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::format(&path, e))?;
            let mut header = vec!["k".to_string()];
            header.extend(ms.iter().map(|m| format!("m{m}")));
            w.write_record(&header)
                .map_err(|e| CliError::format(&path, e))?;
            for &k in ks {
                let mut row = vec![k.to_string()];
                for &m in ms {
                    row.push(
                        cells
                            .iter()
                            .find(|c| c.k == k && c.m == m && c.f == f)
                            .map_or(String::new(), |c| format!("{}", pick(c))),
                    );
                }
                w.write_record(&row)
                    .map_err(|e| CliError::format(&path, e))?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
    }
    Ok(())
}
