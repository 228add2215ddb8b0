//! Fixtures shared by the benchmarks.

use mulan::sim::{offgrid_shoebox_scenario, OffGridConfig};
use mulan::spectral::make_frequency_grid;
use mulan::{RealSignal, Spectrum};

/// Off-grid scenario spectra on `frequencies` bins between 200 and 2000 Hz.
pub fn offgrid_spectra(
    channels: usize,
    echoes: usize,
    frequencies: usize,
    seed: u64,
) -> Vec<Spectrum> {
    let cfg = OffGridConfig {
        channels,
        echoes,
        ..Default::default()
    };
    let grid = make_frequency_grid(200.0, 2000.0, frequencies).expect("valid grid");
    offgrid_shoebox_scenario(&cfg, seed)
        .and_then(|s| s.spectra(&grid))
        .expect("scenario builds")
}

/// Time-domain measurements and the true filter length of a two-channel scenario.
pub fn offgrid_pair(echoes: usize, seed: u64) -> (RealSignal, RealSignal, usize) {
    let cfg = OffGridConfig {
        echoes,
        ..Default::default()
    };
    let s = offgrid_shoebox_scenario(&cfg, seed).expect("scenario builds");
    let mut m = s.measurements.into_iter();
    (m.next().unwrap(), m.next().unwrap(), s.filter_len)
}
