//! Discrete-time signals, arithmetic frequency grids and the generalized DFT.
//!
//! Frequencies are carried in Hz everywhere. The transform uses the
//! negative-exponent convention `x(f) = sum_n x[n] exp(-2 pi i f n / Fs)` and
//! is not normalized.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A finite real discrete-time signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSignal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl RealSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("signal must have at least one sample"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("signal samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Returns a copy with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * factor).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Frequencies `f_start + i * step` for `i = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    f_start: f64,
    step: f64,
    count: usize,
}

impl FrequencyGrid {
    pub fn new(f_start: f64, step: f64, count: usize) -> Result<Self> {
        if !(f_start.is_finite() && f_start > 0.0) {
            return Err(invalid(format!(
                "grid start must be positive, got {f_start}"
            )));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid(format!("grid step must be positive, got {step}")));
        }
        if count == 0 {
            return Err(invalid("grid must contain at least one frequency"));
        }
        Ok(Self {
            f_start,
            step,
            count,
        })
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.f_start + i as f64 * self.step
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequency(self.count - 1)
    }

    pub fn frequencies(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.frequency(i))
    }

    /// Length of the delay interval that the grid resolves without wrapping.
    pub fn delay_period(&self) -> f64 {
        1.0 / self.step
    }

    pub fn check_nyquist(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        // Tolerate rounding in f_start + (F-1) * step.
        if self.max_frequency() > nyquist * (1.0 + 1e-12) {
            return Err(Error::AboveNyquist {
                max_frequency: self.max_frequency(),
                nyquist,
            });
        }
        Ok(())
    }
}

/// Builds the grid of `count` equally spaced frequencies spanning `[f_min, f_max]`.
pub fn make_frequency_grid(f_min: f64, f_max: f64, count: usize) -> Result<FrequencyGrid> {
    if !(f_min.is_finite() && f_max.is_finite()) || f_min <= 0.0 || f_max <= f_min {
        return Err(invalid(format!(
            "frequency range must satisfy 0 < f_min < f_max, got [{f_min}, {f_max}]"
        )));
    }
    if count < 2 {
        return Err(invalid(format!(
            "grid needs at least 2 frequencies, got {count}"
        )));
    }
    FrequencyGrid::new(f_min, (f_max - f_min) / (count - 1) as f64, count)
}

/// Complex values sampled on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<Complex64>,
    grid: FrequencyGrid,
}

impl Spectrum {
    pub fn new(values: Vec<Complex64>, grid: FrequencyGrid) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::DimensionMismatch(format!(
                "spectrum has {} values for a grid of {} frequencies",
                values.len(),
                grid.count()
            )));
        }
        if values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::NonFinite("spectrum values"));
        }
        Ok(Self { values, grid })
    }

    /// Evaluates `f -> value` on every grid frequency.
    pub fn from_fn(grid: FrequencyGrid, mut f: impl FnMut(f64) -> Complex64) -> Result<Self> {
        Self::new(grid.frequencies().map(&mut f).collect(), grid)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Elementwise product with another spectrum on the same grid.
    pub fn hadamard(&self, other: &Spectrum) -> Result<Spectrum> {
        self.check_same_grid(other)?;
        Spectrum::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
            self.grid,
        )
    }

    pub fn scaled(&self, factor: Complex64) -> Spectrum {
        Spectrum {
            values: self.values.iter().map(|v| v * factor).collect(),
            grid: self.grid,
        }
    }

    pub(crate) fn check_same_grid(&self, other: &Spectrum) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch(
                "spectra are defined on different grids".into(),
            ));
        }
        Ok(())
    }
}

/// Evaluates the DFT sum of `signal` at every frequency of `grid`.
///
/// The grid is generally off the canonical bins, so this is a direct dense
/// evaluation rather than an FFT.
pub fn generalized_dft(signal: &RealSignal, grid: &FrequencyGrid) -> Result<Spectrum> {
    grid.check_nyquist(signal.sample_rate())?;
    let fs = signal.sample_rate();
    let values =
        grid.frequencies()
            .map(|f| {
                let cycles_per_sample = f / fs;
                signal.samples().iter().enumerate().fold(
                    Complex64::new(0.0, 0.0),
                    |acc, (n, &x)| {
                        // Reduce the phase to one turn before scaling by 2 pi.
                        let turns = (cycles_per_sample * n as f64).fract();
                        let (s, c) = (2.0 * PI * turns).sin_cos();
                        acc + Complex64::new(x * c, -x * s)
                    },
                )
            })
            .collect();
    Spectrum::new(values, *grid)
}
