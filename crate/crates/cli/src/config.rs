use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mulan::baseline::LassoOptions;
use mulan::eval::SweepSpec;
use mulan::sim::{GridType, OffGridConfig, OnGridConfig};
use mulan::spectral::{make_frequency_grid, FrequencyGrid};
use mulan::MulanConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mulan,
    Cr,
    Lasso,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mulan => "mulan",
            Method::Cr => "cr",
            Method::Lasso => "lasso",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub kind: GridType,
    pub seed: u64,
    pub channels: usize,
    pub echoes: usize,
    pub n: usize,
    pub fs: f64,
    /// Off-grid source band in Hz.
    pub band: (f64, f64),
    pub absorption: f64,
    pub guard: usize,
    /// On-grid taps are drawn from `0..max_len`.
    pub max_len: usize,
    pub tilt: f64,
    pub check_band: (f64, f64),
    /// Off-grid only: replaces the synthetic source by a mono WAV file.
    pub source_wav: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let off = OffGridConfig::default();
        let on = OnGridConfig::default();
        Self {
            kind: GridType::OffGrid,
            seed: 0,
            channels: off.channels,
            echoes: off.echoes,
            n: off.n,
            fs: off.fs,
            band: off.band,
            absorption: off.absorption,
            guard: off.guard,
            max_len: on.max_len,
            tilt: on.tilt,
            check_band: on.check_band,
            source_wav: None,
        }
    }
}

impl ScenarioSection {
    pub fn offgrid(&self) -> OffGridConfig {
        OffGridConfig {
            channels: self.channels,
            echoes: self.echoes,
            n: self.n,
            fs: self.fs,
            band: self.band,
            absorption: self.absorption,
            guard: self.guard,
        }
    }

    pub fn ongrid(&self) -> OnGridConfig {
        OnGridConfig {
            channels: self.channels,
            echoes: self.echoes,
            n: self.n,
            fs: self.fs,
            max_len: self.max_len,
            tilt: self.tilt,
            check_band: self.check_band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub f_min: f64,
    pub f_max: f64,
    pub frequencies: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            f_min: 200.0,
            f_max: 2000.0,
            frequencies: 401,
        }
    }
}

impl AnalysisSection {
    pub fn grid(&self) -> CliResult<FrequencyGrid> {
        Ok(make_frequency_grid(
            self.f_min,
            self.f_max,
            self.frequencies,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: Method,
    /// Echoes per channel for MULAN; defaults to the scenario's count.
    pub echoes: Option<usize>,
    pub n_restarts: usize,
    pub max_iter: usize,
    pub conv_thresh: f64,
    /// Defaults to the scenario seed.
    pub rng_seed: Option<u64>,
    pub renormalize_root_modulus: bool,
    /// Filter length for the discrete baselines.
    pub filter_len: Option<usize>,
    pub lambda: f64,
    pub lasso_max_iter: usize,
    pub lasso_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let m = MulanConfig::default();
        let l = LassoOptions::default();
        Self {
            method: Method::Mulan,
            echoes: None,
            n_restarts: m.n_restarts,
            max_iter: m.max_iter,
            conv_thresh: m.conv_thresh,
            rng_seed: None,
            renormalize_root_modulus: m.renormalize_root_modulus,
            filter_len: None,
            lambda: l.lambda,
            lasso_max_iter: l.max_iter,
            lasso_tol: l.tol,
        }
    }
}

impl SolverSection {
    pub fn mulan(&self, default_seed: u64) -> MulanConfig {
        MulanConfig {
            n_restarts: self.n_restarts,
            max_iter: self.max_iter,
            conv_thresh: self.conv_thresh,
            rng_seed: self.rng_seed.unwrap_or(default_seed),
            renormalize_root_modulus: self.renormalize_root_modulus,
        }
    }

    pub fn lasso(&self) -> LassoOptions {
        LassoOptions {
            lambda: self.lambda,
            max_iter: self.lasso_max_iter,
            tol: self.lasso_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub measurements: String,
    pub truth: String,
    pub result: String,
    pub report: String,
    pub eval_csv: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            measurements: "measurements.bin".into(),
            truth: "truth.json".into(),
            result: "result.json".into(),
            report: "report.json".into(),
            eval_csv: "eval.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub analysis: AnalysisSection,
    pub solver: SolverSection,
    pub output: OutputSection,
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.output.dir.join(name)
    }
}
