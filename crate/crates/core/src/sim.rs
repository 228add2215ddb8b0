//! Ground truth and measurement synthesis: first-order shoebox echoes,
//! sparse on-grid filters, localized sources and exact fractional-delay
//! rendering.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fri::EchoSet;
use crate::spectral::{generalized_dft, FrequencyGrid, RealSignal, Spectrum};

pub const SOUND_SPEED: f64 = 343.0;

/// Rectangular room with one source and `M` microphones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShoeboxSpec {
    pub room_dims: [f64; 3],
    pub source_pos: [f64; 3],
    pub mic_pos: Vec<[f64; 3]>,
    /// Energy absorption shared by all six walls.
    pub absorption: f64,
    pub sound_speed: f64,
}

impl ShoeboxSpec {
    pub fn validate(&self) -> Result<()> {
        if self.room_dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(invalid("room dimensions must be positive"));
        }
        if !(0.0..=1.0).contains(&self.absorption) {
            return Err(invalid(format!(
                "absorption must lie in [0, 1], got {}",
                self.absorption
            )));
        }
        if !(self.sound_speed > 0.0) {
            return Err(invalid("sound speed must be positive"));
        }
        if self.mic_pos.is_empty() {
            return Err(invalid("need at least one microphone"));
        }
        let inside = |p: &[f64; 3]| {
            p.iter()
                .zip(&self.room_dims)
                .all(|(x, d)| *x > 0.0 && x < d)
        };
        if !inside(&self.source_pos) || !self.mic_pos.iter().all(inside) {
            return Err(invalid(
                "source and microphones must lie strictly inside the room",
            ));
        }
        Ok(())
    }

    /// Room between 4x6x8 m and 5x7x9 m, positions at least `0.5` m from
    /// every wall and microphones at least 1 m from the source.
    pub fn random<R: Rng>(rng: &mut R, mics: usize, absorption: f64) -> Self {
        let room_dims = [
            rng.random_range(4.0..5.0),
            rng.random_range(6.0..7.0),
            rng.random_range(8.0..9.0),
        ];
        let point = |rng: &mut R| {
            let mut p = [0.0; 3];
            for (x, d) in p.iter_mut().zip(&room_dims) {
                *x = rng.random_range(0.5..d - 0.5);
            }
            p
        };
        let source_pos = point(rng);
        let mic_pos = (0..mics)
            .map(|_| loop {
                let p = point(rng);
                if distance(&p, &source_pos) >= 1.0 {
                    break p;
                }
            })
            .collect();
        Self {
            room_dims,
            source_pos,
            mic_pos,
            absorption,
            sound_speed: SOUND_SPEED,
        }
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Direct path plus the six first-order wall images for every microphone.
///
/// Weights are `rho^b / distance` with `rho = sqrt(1 - absorption)` and `b`
/// the number of reflections.
pub fn shoebox_first_order(spec: &ShoeboxSpec) -> Result<Vec<EchoSet>> {
    spec.validate()?;
    let rho = (1.0 - spec.absorption).sqrt();
    let mut images = vec![(spec.source_pos, 0)];
    for axis in 0..3 {
        for wall in [0.0, spec.room_dims[axis]] {
            let mut p = spec.source_pos;
            p[axis] = 2.0 * wall - p[axis];
            images.push((p, 1));
        }
    }
    spec.mic_pos
        .iter()
        .map(|mic| {
            let mut delays = Vec::with_capacity(images.len());
            let mut weights = Vec::with_capacity(images.len());
            for (img, bounces) in &images {
                let d = distance(img, mic);
                if d == 0.0 {
                    return Err(invalid("source and microphone coincide"));
                }
                delays.push(d / spec.sound_speed);
                weights.push(rho.powi(*bounces) / d);
            }
            EchoSet::new(delays, weights)
        })
        .collect()
}

/// Divides every weight by the largest one if any exceeds 1; returns the factor applied.
pub fn rescale_to_unit(echoes: &[EchoSet]) -> Result<(Vec<EchoSet>, f64)> {
    let max = echoes
        .iter()
        .flat_map(|e| e.weights().iter().copied())
        .fold(0.0, f64::max);
    if max <= 1.0 {
        return Ok((echoes.to_vec(), 1.0));
    }
    let scaled = echoes
        .iter()
        .map(|e| e.shifted_scaled(0.0, max))
        .collect::<Result<_>>()?;
    Ok((scaled, 1.0 / max))
}

/// Keeps the `k` earliest echoes of every channel.
pub fn truncate_earliest(echoes: &[EchoSet], k: usize) -> Result<Vec<EchoSet>> {
    echoes
        .iter()
        .map(|e| {
            if k > e.len() {
                return Err(invalid(format!(
                    "asked for {k} echoes, only {} available",
                    e.len()
                )));
            }
            EchoSet::new(e.delays()[..k].to_vec(), e.weights()[..k].to_vec())
        })
        .collect()
}

fn validate_band(band: (f64, f64), fs: f64) -> Result<()> {
    let (lo, hi) = band;
    if !(lo > 0.0 && lo < hi && hi < fs / 2.0) {
        return Err(invalid(format!(
            "band [{lo}, {hi}] must satisfy 0 < lo < hi < {}",
            fs / 2.0
        )));
    }
    Ok(())
}

// C-infinity step from 0 at t <= 0 to 1 at t >= 1.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Flat-top window with C-infinity ramps over `ramp` of each end.
fn smooth_window(len: usize, ramp: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let x = (i as f64 + 0.5) / len as f64;
            smooth_step(x / ramp) * smooth_step((1.0 - x) / ramp)
        })
        .collect()
}

const FLOOR_RATIO: f64 = 1e-3;
const MAX_ATTEMPTS: usize = 200;

/// `true` if `min |s(f)| >= 1e-3 max |s(f)|` on a grid four times denser than
/// the signal's frequency resolution across `band`.
fn spectral_floor_holds(signal: &RealSignal, active: usize, band: (f64, f64)) -> Result<bool> {
    let resolution = signal.sample_rate() / active as f64;
    let count = (((band.1 - band.0) / resolution) * 4.0).ceil().max(2.0) as usize;
    let grid = FrequencyGrid::new(band.0, (band.1 - band.0) / (count - 1) as f64, count)?;
    let mags: Vec<f64> = generalized_dft(signal, &grid)?
        .values()
        .iter()
        .map(|v| v.norm())
        .collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    let min = mags.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max > 0.0 && min >= FLOOR_RATIO * max)
}

/// Band-limited noise occupying the whole length `n`.
pub fn synth_bandlimited_source(
    n: usize,
    fs: f64,
    band: (f64, f64),
    seed: u64,
) -> Result<RealSignal> {
    synth_localized_source(n, n, fs, band, seed)
}

/// Band-limited noise supported on the first `active` of `n` samples.
///
/// Noise with a hard spectral mask on `band` is shaped by a smooth flat-top
/// window, normalized to unit peak, and regenerated until the spectrum floor
/// holds everywhere in `band`.
pub fn synth_localized_source(
    n: usize,
    active: usize,
    fs: f64,
    band: (f64, f64),
    seed: u64,
) -> Result<RealSignal> {
    validate_band(band, fs)?;
    if active < 16 || active > n {
        return Err(invalid(format!(
            "active length {active} must lie in [16, {n}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = smooth_window(active, 0.1);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(active);
    for _ in 0..MAX_ATTEMPTS {
        let mut bins = vec![Complex64::new(0.0, 0.0); active];
        for k in 1..active.div_ceil(2) {
            let f = k as f64 * fs / active as f64;
            if f >= band.0 && f <= band.1 {
                let c = Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                bins[k] = c;
                bins[active - k] = c.conj();
            }
        }
        ifft.process(&mut bins);
        let mut samples: Vec<f64> = bins.iter().zip(&window).map(|(b, w)| b.re * w).collect();
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(peak > 0.0) {
            continue;
        }
        samples.iter_mut().for_each(|v| *v /= peak);
        samples.resize(n, 0.0);
        let signal = RealSignal::new(samples, fs)?;
        if spectral_floor_holds(&signal, active, band)? {
            return Ok(signal);
        }
    }
    Err(Error::SpectralFloor(MAX_ATTEMPTS))
}

/// Spectrally tilted broadband noise (first-order autoregressive with
/// coefficient `tilt`) on the first `active` of `n` samples, regenerated
/// until the spectrum floor holds on `check_band`.
pub fn synth_tilted_source(
    n: usize,
    active: usize,
    fs: f64,
    tilt: f64,
    check_band: (f64, f64),
    seed: u64,
) -> Result<RealSignal> {
    validate_band(check_band, fs)?;
    if !(tilt.abs() < 1.0) {
        return Err(invalid("tilt must lie in (-1, 1)"));
    }
    if active < 16 || active > n {
        return Err(invalid(format!(
            "active length {active} must lie in [16, {n}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn_in = 200;
    for _ in 0..MAX_ATTEMPTS {
        let mut state = 0.0;
        let mut samples = Vec::with_capacity(n);
        for i in 0..burn_in + active {
            let e: f64 = StandardNormal.sample(&mut rng);
            state = tilt * state + e;
            if i >= burn_in {
                samples.push(state);
            }
        }
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        samples.iter_mut().for_each(|v| *v /= peak);
        samples.resize(n, 0.0);
        let signal = RealSignal::new(samples, fs)?;
        if spectral_floor_holds(&signal, active, check_band)? {
            return Ok(signal);
        }
    }
    Err(Error::SpectralFloor(MAX_ATTEMPTS))
}

/// `x_m(n) = sum_k c_{m,k} s(n - Fs tau_{m,k})` for band-limited `s`, with the
/// fractional delays applied as phase ramps on a zero-padded transform.
pub fn render_offgrid(
    source: &RealSignal,
    echoes: &[EchoSet],
    n: usize,
) -> Result<Vec<RealSignal>> {
    let fs = source.sample_rate();
    let mut max_shift = 0.0f64;
    for e in echoes {
        for &tau in e.delays() {
            if tau < 0.0 {
                return Err(invalid("delays must be nonnegative"));
            }
            max_shift = max_shift.max(tau * fs);
        }
    }
    let p = (n.max(source.len()) + max_shift.ceil() as usize + 1024).next_power_of_two();
    if source.len() as f64 + max_shift > p as f64 {
        return Err(invalid("delays exceed the padded window"));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);
    let mut spec: Vec<Complex64> = source
        .samples()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(p)
        .collect();
    fwd.process(&mut spec);
    echoes
        .iter()
        .map(|e| {
            let mut out: Vec<Complex64> = spec
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let signed = if k <= p / 2 {
                        k as f64
                    } else {
                        k as f64 - p as f64
                    };
                    let h = e.frequency_response(signed * fs / p as f64);
                    // The Nyquist bin must stay real for a real output.
                    let h = if k == p / 2 {
                        Complex64::new(h.re, 0.0)
                    } else {
                        h
                    };
                    s * h
                })
                .collect();
            inv.process(&mut out);
            RealSignal::new(out[..n].iter().map(|v| v.re / p as f64).collect(), fs)
        })
        .collect()
}

/// Valid-region convolution `x_m(n) = sum_j h_m(j) s(L - 1 + n - j)` for
/// `n = 0..D - L`, where `D` is the source length.
pub fn render_ongrid(source: &RealSignal, filters: &[Vec<f64>]) -> Result<Vec<RealSignal>> {
    let l = filters
        .first()
        .map(|f| f.len())
        .ok_or_else(|| invalid("need at least one filter"))?;
    if filters.iter().any(|f| f.len() != l) {
        return Err(Error::DimensionMismatch("filters differ in length".into()));
    }
    let s = source.samples();
    if l == 0 || l > s.len() {
        return Err(Error::DimensionMismatch(format!(
            "filter length {l} for a source of length {}",
            s.len()
        )));
    }
    filters
        .iter()
        .map(|h| {
            let out = (0..=s.len() - l)
                .map(|n| {
                    h.iter()
                        .enumerate()
                        .map(|(j, hj)| hj * s[l - 1 + n - j])
                        .sum()
                })
                .collect();
            RealSignal::new(out, source.sample_rate())
        })
        .collect()
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

/// `h(n) = sum_k c_k sinc(n - Fs tau_k)` for `n = 0..L`.
pub fn sample_smoothed_filter(echoes: &EchoSet, fs: f64, len: usize) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(invalid("filter length must be at least 1"));
    }
    let h: Vec<f64> = (0..len)
        .map(|n| {
            echoes
                .iter()
                .map(|(tau, c)| c * sinc(n as f64 - fs * tau))
                .sum()
        })
        .collect();
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("smoothed filter"));
    }
    Ok(h)
}

/// Reads a mono PCM16 or float32 WAV file recorded at `fs`.
pub fn read_wav_mono(path: &Path, fs: f64) -> Result<RealSignal> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Wav(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "expected mono, got {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate as f64 != fs {
        return Err(Error::Wav(format!(
            "sample rate {} differs from configured {fs}",
            spec.sample_rate
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::Wav(format!(
                "unsupported sample format {fmt:?} with {bits} bits"
            )))
        }
    }
    .map_err(|e| Error::Wav(e.to_string()))?;
    RealSignal::new(samples, fs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridType {
    OnGrid,
    OffGrid,
}

/// One synthetic experiment.
#[derive(Debug, Clone)]
pub struct EchoScenario {
    pub echoes: Vec<EchoSet>,
    /// Source as seen by the measurements: `x_m(f) = h_m(f) s(f)` on any grid.
    pub source: RealSignal,
    pub measurements: Vec<RealSignal>,
    pub grid_type: GridType,
    /// True filter length in samples, as handed to the discrete baselines.
    pub filter_len: usize,
    /// Global factor applied to the weights to keep them within (0, 1].
    pub weight_scale: f64,
}

impl EchoScenario {
    pub fn channels(&self) -> usize {
        self.measurements.len()
    }

    pub fn echoes_per_channel(&self) -> usize {
        self.echoes.first().map_or(0, |e| e.len())
    }

    pub fn len(&self) -> usize {
        self.measurements.first().map_or(0, |x| x.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.source.sample_rate()
    }

    /// Generalized DFT of every measurement on `grid`.
    pub fn spectra(&self, grid: &FrequencyGrid) -> Result<Vec<Spectrum>> {
        self.measurements
            .iter()
            .map(|x| generalized_dft(x, grid))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OffGridConfig {
    pub channels: usize,
    pub echoes: usize,
    pub n: usize,
    pub fs: f64,
    pub band: (f64, f64),
    pub absorption: f64,
    /// Zero samples kept after the last delayed copy.
    pub guard: usize,
}

impl Default for OffGridConfig {
    fn default() -> Self {
        Self {
            channels: 2,
            echoes: 7,
            n: 4000,
            fs: 16000.0,
            band: (150.0, 2100.0),
            absorption: 0.2,
            guard: 16,
        }
    }
}

/// Random shoebox room, `echoes` earliest first-order echoes per microphone,
/// localized band-limited source, exact fractional-delay rendering.
pub fn offgrid_shoebox_scenario(cfg: &OffGridConfig, seed: u64) -> Result<EchoScenario> {
    if cfg.channels == 0 || cfg.echoes == 0 || cfg.echoes > 7 {
        return Err(invalid("need at least one channel and 1 to 7 echoes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room = ShoeboxSpec::random(&mut rng, cfg.channels, cfg.absorption);
    let echoes = truncate_earliest(&shoebox_first_order(&room)?, cfg.echoes)?;
    let (echoes, weight_scale) = rescale_to_unit(&echoes)?;
    let max_delay = echoes
        .iter()
        .flat_map(|e| e.delays().iter().copied())
        .fold(0.0, f64::max);
    let tail = (max_delay * cfg.fs).ceil() as usize;
    let active = cfg
        .n
        .checked_sub(tail + cfg.guard)
        .filter(|a| *a >= cfg.n / 4)
        .ok_or_else(|| {
            invalid(format!(
                "{} samples cannot hold echoes up to {max_delay} s",
                cfg.n
            ))
        })?;
    let source = synth_localized_source(cfg.n, active, cfg.fs, cfg.band, rng.next_u64())?;
    let measurements = render_offgrid(&source, &echoes, cfg.n)?;
    Ok(EchoScenario {
        echoes,
        source,
        measurements,
        grid_type: GridType::OffGrid,
        filter_len: tail + 1,
        weight_scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnGridConfig {
    pub channels: usize,
    pub echoes: usize,
    pub n: usize,
    pub fs: f64,
    /// Taps are drawn from `0..max_len`.
    pub max_len: usize,
    pub tilt: f64,
    pub check_band: (f64, f64),
}

impl Default for OnGridConfig {
    fn default() -> Self {
        Self {
            channels: 2,
            echoes: 7,
            n: 4000,
            fs: 16000.0,
            max_len: 800,
            tilt: 0.95,
            check_band: (200.0, 2000.0),
        }
    }
}

/// Sparse integer-tap filters with weights in [0.1, 1], shifted so the
/// earliest tap overall sits at 0, driven by tilted broadband noise.
pub fn ongrid_scenario(cfg: &OnGridConfig, seed: u64) -> Result<EchoScenario> {
    if cfg.channels == 0 || cfg.echoes == 0 || cfg.echoes > cfg.max_len {
        return Err(invalid("need at least one channel and 1..=max_len echoes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps: Vec<Vec<(usize, f64)>> = (0..cfg.channels)
        .map(|_| {
            rand::seq::index::sample(&mut rng, cfg.max_len, cfg.echoes)
                .into_iter()
                .map(|t| (t, 0.0))
                .collect()
        })
        .collect();
    let taps: Vec<Vec<(usize, f64)>> = taps
        .into_iter()
        .map(|ch| {
            ch.into_iter()
                .map(|(t, _)| (t, rng.random_range(0.1..=1.0)))
                .collect()
        })
        .collect();
    let first = taps.iter().flatten().map(|(t, _)| *t).min().unwrap_or(0);
    let last = taps.iter().flatten().map(|(t, _)| *t).max().unwrap_or(0);
    let len = last - first + 1;
    if cfg.n < 2 * len {
        return Err(invalid(format!(
            "{} samples are too few for filters of length {len}",
            cfg.n
        )));
    }
    let mut filters = vec![vec![0.0; len]; cfg.channels];
    let mut echoes = Vec::with_capacity(cfg.channels);
    for (h, ch) in filters.iter_mut().zip(&taps) {
        for &(t, w) in ch {
            h[t - first] = w;
        }
        echoes.push(EchoSet::new(
            ch.iter()
                .map(|(t, _)| (t - first) as f64 / cfg.fs)
                .collect(),
            ch.iter().map(|(_, w)| *w).collect(),
        )?);
    }
    let active = cfg.n - len + 1;
    let source = synth_tilted_source(
        cfg.n,
        active,
        cfg.fs,
        cfg.tilt,
        cfg.check_band,
        rng.next_u64(),
    )?;
    let mut padded = vec![0.0; len - 1];
    padded.extend_from_slice(source.samples());
    let measurements = render_ongrid(&RealSignal::new(padded, cfg.fs)?, &filters)?;
    Ok(EchoScenario {
        echoes,
        source,
        measurements,
        grid_type: GridType::OnGrid,
        filter_len: len,
        weight_scale: 1.0,
    })
}
