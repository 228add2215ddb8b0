//! On-disk formats: binary measurement arrays and JSON documents.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mulan::sim::GridType;
use mulan::{EchoSet, RealSignal};

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 8] = *b"MULANMS1";
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 32;

/// Writes `M` equal-length channels as little-endian f64 after a header of
/// magic, `M` (u32), `N` (u32), sample rate (f64) and the 32-byte config hash.
pub fn write_measurements(
    path: &Path,
    channels: &[RealSignal],
    config_hash: &str,
) -> CliResult<()> {
    let first = channels
        .first()
        .ok_or_else(|| CliError::Usage("no channels to write".into()))?;
    if channels.iter().any(|c| c.len() != first.len()) {
        return Err(CliError::Usage("channels have different lengths".into()));
    }
    let hash = decode_hash(config_hash)?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * channels.len() * first.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&(channels.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(first.len() as u32).to_le_bytes());
    buf.extend_from_slice(&first.sample_rate().to_le_bytes());
    buf.extend_from_slice(&hash);
    for c in channels {
        for v in c.samples() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(&buf).map_err(|e| CliError::io(path, e))
}

/// Reads a measurement file; returns the channels and the embedded config hash.
pub fn read_measurements(path: &Path) -> CliResult<(Vec<RealSignal>, String)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    if bytes.len() < HEADER_LEN || bytes[..8] != MAGIC {
        return Err(CliError::format(path, "not a measurement file"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (m, n) = (u32_at(8), u32_at(12));
    let fs = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let hash = hex::encode(&bytes[24..56]);
    let data = &bytes[HEADER_LEN..];
    if data.len() != 8 * m * n {
        return Err(CliError::format(
            path,
            format!(
                "header declares {m}x{n} samples but {} bytes follow",
                data.len()
            ),
        ));
    }
    let channels = data
        .chunks_exact(8 * n.max(1))
        .take(m)
        .map(|chunk| {
            let samples = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            RealSignal::new(samples, fs).map_err(|e| CliError::format(path, e))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((channels, hash))
}

fn decode_hash(hash: &str) -> CliResult<[u8; 32]> {
    hex::decode(hash)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| CliError::Usage(format!("malformed config hash {hash:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchoJson {
    pub delay_s: f64,
    pub weight: f64,
}

pub fn echoes_to_json(echoes: &[EchoSet]) -> Vec<Vec<EchoJson>> {
    echoes
        .iter()
        .map(|e| {
            e.iter()
                .map(|(delay_s, weight)| EchoJson { delay_s, weight })
                .collect()
        })
        .collect()
}

pub fn echoes_from_json(channels: &[Vec<EchoJson>]) -> CliResult<Vec<EchoSet>> {
    channels
        .iter()
        .map(|c| {
            EchoSet::new(
                c.iter().map(|e| e.delay_s).collect(),
                c.iter().map(|e| e.weight).collect(),
            )
            .map_err(CliError::from)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub config_hash: String,
    pub seed: u64,
    pub grid_type: GridType,
    pub sample_rate: f64,
    /// True filter length in samples.
    pub filter_len: usize,
    pub weight_scale: f64,
    pub channels: Vec<Vec<EchoJson>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub config_hash: String,
    /// Hash embedded in the measurement file that was solved.
    pub measurement_hash: String,
    pub method: String,
    pub sample_rate: f64,
    pub echoes: Vec<Vec<EchoJson>>,
    /// MULAN cost, or the baseline residual.
    pub cost: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_restart: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<Vec<Vec<f64>>>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}
