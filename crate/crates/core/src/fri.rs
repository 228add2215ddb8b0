//! Non-blind recovery of Dirac streams from their spectra with a known source.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    min_right_singular_vector, toeplitz_full, vandermonde_weights, AnnihilatingFilter,
};
use crate::spectral::Spectrum;

/// Default floor for spectral inversion, relative to `max |s|`.
pub const DEFAULT_INVERSION_FLOOR: f64 = 1e-10;

/// One channel's echoes: delays in seconds, sorted ascending, with their weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoSet {
    delays: Vec<f64>,
    weights: Vec<f64>,
}

impl EchoSet {
    /// Builds an echo set, sorting by delay and permuting weights alongside.
    pub fn new(delays: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if delays.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} delays but {} weights",
                delays.len(),
                weights.len()
            )));
        }
        if delays.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("echo parameters"));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(invalid("echo weights must be nonnegative"));
        }
        let mut pairs: Vec<(f64, f64)> = delays.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (delays, weights) = pairs.into_iter().unzip();
        Ok(Self { delays, weights })
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.delays
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    /// Shifts every delay by `-shift` and divides every weight by `scale`.
    pub fn shifted_scaled(&self, shift: f64, scale: f64) -> Result<Self> {
        Self::new(
            self.delays.iter().map(|d| d - shift).collect(),
            self.weights.iter().map(|w| w / scale).collect(),
        )
    }

    /// `sum_k c_k exp(-2 pi i f tau_k)`, the channel's frequency response.
    pub fn frequency_response(&self, f: f64) -> Complex64 {
        self.iter()
            .map(|(tau, c)| Complex64::from_polar(c, -2.0 * PI * f * tau))
            .sum()
    }
}

/// Elementwise reciprocal `z = 1 / s`, with the default relative floor.
pub fn invert_spectrum(s: &Spectrum) -> Result<Spectrum> {
    invert_spectrum_with_floor(s, DEFAULT_INVERSION_FLOOR)
}

/// Elementwise reciprocal; fails if any `|s(f)| <= rel_floor * max |s|`.
pub fn invert_spectrum_with_floor(s: &Spectrum, rel_floor: f64) -> Result<Spectrum> {
    let max = s.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = rel_floor * max;
    for (v, f) in s.values().iter().zip(s.grid().frequencies()) {
        if v.norm() <= floor || v.norm() == 0.0 {
            return Err(Error::VanishingSpectrum {
                frequency: f,
                magnitude: v.norm(),
            });
        }
    }
    Spectrum::new(s.values().iter().map(|v| v.inv()).collect(), *s.grid())
}

/// Unit-norm filter of `K + 1` taps minimizing `|Toep(h) a|`.
pub fn annihilate_nonblind(h: &Spectrum, k: usize) -> Result<AnnihilatingFilter> {
    check_frequency_count(h.len(), k)?;
    let t = toeplitz_full(h.values(), k + 1)?;
    let (v, _) = min_right_singular_vector(&t)?;
    AnnihilatingFilter::new(v.iter().copied().collect())
}

pub(crate) fn check_frequency_count(f: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid("number of echoes must be at least 1"));
    }
    if f < 2 * k + 1 {
        return Err(Error::TooFewFrequencies {
            echoes: k,
            required: 2 * k + 1,
            available: f,
        });
    }
    Ok(())
}

/// Maps ratios `r = exp(-2 pi i delta_f tau)` to delays in `[0, 1 / delta_f)`.
///
/// Only the argument of each root is used. Delays are unambiguous only when
/// the true delays lie in the first half of that interval.
pub fn roots_to_delays(roots: &[Complex64], delta_f: f64) -> Result<Vec<f64>> {
    if !(delta_f > 0.0) {
        return Err(invalid("frequency step must be positive"));
    }
    let period = 1.0 / delta_f;
    roots
        .iter()
        .map(|r| {
            if r.norm() == 0.0 {
                return Err(Error::ZeroRoot);
            }
            let tau = -r.arg() / (2.0 * PI * delta_f);
            // arg = pi maps to -period/2, which wraps to +period/2.
            Ok(if tau < 0.0 { tau + period } else { tau })
        })
        .collect()
}

/// Echo parameters of one channel from its annihilating filter and `h = x * z`.
pub fn echoes_from_filter(filter: &AnnihilatingFilter, h: &Spectrum) -> Result<EchoSet> {
    let ratios = filter.ratios()?;
    let delays = roots_to_delays(&ratios, h.grid().step())?;
    let weights = vandermonde_weights(&ratios, h, h.grid().f_start())?;
    EchoSet::new(delays, weights)
}

/// Recovers one channel's echoes from its measurement spectrum and the known source spectrum.
pub fn recover_echoes_nonblind(x: &Spectrum, s: &Spectrum, k: usize) -> Result<EchoSet> {
    x.check_same_grid(s)?;
    check_frequency_count(x.len(), k)?;
    let z = invert_spectrum(s)?;
    let h = x.hadamard(&z)?;
    let filter = annihilate_nonblind(&h, k)?;
    echoes_from_filter(&filter, &h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{make_frequency_grid, FrequencyGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn synth(grid: FrequencyGrid, echoes: &EchoSet) -> Spectrum {
        Spectrum::from_fn(grid, |f| echoes.frequency_response(f)).unwrap()
    }

    #[test]
    fn echo_set_sorts_pairs() {
        let e = EchoSet::new(vec![3.0, 1.0, 2.0], vec![0.3, 0.1, 0.2]).unwrap();
        assert_eq!(e.delays(), &[1.0, 2.0, 3.0]);
        assert_eq!(e.weights(), &[0.1, 0.2, 0.3]);
        assert!(EchoSet::new(vec![1.0], vec![-1.0]).is_err());
        assert!(EchoSet::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn inversion_examples() {
        let g = make_frequency_grid(1.0, 5.0, 5).unwrap();
        let ones = Spectrum::new(vec![c(1.0); 5], g).unwrap();
        assert_eq!(invert_spectrum(&ones).unwrap(), ones);
        let s = Spectrum::new(vec![Complex64::new(0.0, 2.0); 5], g).unwrap();
        for v in invert_spectrum(&s).unwrap().values() {
            assert!((v - Complex64::new(0.0, -0.5)).norm() < 1e-16);
        }
    }

    #[test]
    fn inversion_identity_on_random_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = make_frequency_grid(10.0, 90.0, 33).unwrap();
        let s = Spectrum::from_fn(g, |_| {
            Complex64::from_polar(rng.random_range(0.1..2.0), rng.random_range(-PI..PI))
        })
        .unwrap();
        let z = invert_spectrum(&s).unwrap();
        for v in s.hadamard(&z).unwrap().values() {
            assert!((v - c(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn inversion_reports_offending_frequency() {
        let g = make_frequency_grid(100.0, 104.0, 5).unwrap();
        let mut vals = vec![c(1.0); 5];
        vals[3] = c(1e-12);
        let err = invert_spectrum(&Spectrum::new(vals, g).unwrap()).unwrap_err();
        match err {
            Error::VanishingSpectrum { frequency, .. } => assert_eq!(frequency, 103.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_dirac_at_origin() {
        let g = make_frequency_grid(200.0, 209.0, 3).unwrap();
        let h = Spectrum::new(vec![c(1.0); 3], g).unwrap();
        let a = annihilate_nonblind(&h, 1).unwrap();
        let taps = a.coeffs();
        // Proportional to [1, -1] up to a global phase.
        assert!((taps[0] + taps[1]).norm() < 1e-12);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_offgrid_dirac_ratio() {
        let g = FrequencyGrid::new(200.0, 4.5, 9).unwrap();
        let h = Spectrum::from_fn(g, |f| Complex64::from_polar(1.0, -2.0 * PI * f * 0.01)).unwrap();
        let a = annihilate_nonblind(&h, 1).unwrap();
        let r = a.ratios().unwrap();
        assert!((r[0] - Complex64::from_polar(1.0, -2.0 * PI * 0.045)).norm() < 1e-12);
    }

    #[test]
    fn residual_for_three_progressions() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = FrequencyGrid::new(1.0, 1.0, 11).unwrap();
        let ratios: Vec<Complex64> = (0..3)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(-PI..PI)))
            .collect();
        let h = Spectrum::new(
            (0..11u32)
                .map(|i| ratios.iter().map(|r| r.powu(i)).sum())
                .collect(),
            g,
        )
        .unwrap();
        let a = annihilate_nonblind(&h, 3).unwrap();
        let res: f64 = a
            .apply(h.values())
            .unwrap()
            .iter()
            .map(|v| v.norm_sqr())
            .sum();
        assert!(res.sqrt() <= 1e-10);
    }

    #[test]
    fn too_few_frequencies() {
        let g = make_frequency_grid(1.0, 6.0, 6).unwrap();
        let h = Spectrum::new(vec![c(1.0); 6], g).unwrap();
        assert!(matches!(
            annihilate_nonblind(&h, 3),
            Err(Error::TooFewFrequencies { .. })
        ));
    }

    #[test]
    fn root_to_delay_examples() {
        assert_eq!(roots_to_delays(&[c(1.0)], 4.5).unwrap(), vec![0.0]);
        let r = Complex64::from_polar(1.0, -2.0 * PI * 0.045);
        assert!((roots_to_delays(&[r], 4.5).unwrap()[0] - 0.01).abs() < 1e-15);
        // A delay one full period later produces the same ratio.
        let tau = 1.0 / 4.5 + 0.01;
        let aliased = Complex64::from_polar(1.0, -2.0 * PI * 4.5 * tau);
        assert!((roots_to_delays(&[aliased], 4.5).unwrap()[0] - 0.01).abs() < 1e-12);
        // Ratios past half a turn land in the second half of the period.
        let late = Complex64::from_polar(1.0, 2.0 * PI * 0.25);
        assert!((roots_to_delays(&[late], 1.0).unwrap()[0] - 0.75).abs() < 1e-15);
        assert!(matches!(
            roots_to_delays(&[c(0.0)], 1.0),
            Err(Error::ZeroRoot)
        ));
    }

    #[test]
    fn identity_channel() {
        let g = make_frequency_grid(200.0, 2000.0, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = Spectrum::from_fn(g, |_| {
            Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-PI..PI))
        })
        .unwrap();
        let e = recover_echoes_nonblind(&s, &s, 1).unwrap();
        assert!(e.delays()[0].abs() < 1e-12);
        assert!((e.weights()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_offgrid_echoes_on_analysis_grid() {
        let g = make_frequency_grid(200.0, 2000.0, 401).unwrap();
        let truth = EchoSet::new(vec![1.23e-3, 4.56e-3, 7.89e-3], vec![1.0, 0.5, 0.25]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Spectrum::from_fn(g, |_| {
            Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-PI..PI))
        })
        .unwrap();
        let x = synth(g, &truth).hadamard(&s).unwrap();
        let e = recover_echoes_nonblind(&x, &s, 3).unwrap();
        for (got, want) in e.iter().zip(truth.iter()) {
            assert!((got.0 - want.0).abs() < 1e-9, "{got:?} vs {want:?}");
            assert!((got.1 - want.1).abs() < 1e-8);
        }
    }

    #[test]
    fn minimum_frequency_count_enforced() {
        let g = make_frequency_grid(200.0, 2000.0, 4).unwrap();
        let s = Spectrum::new(vec![c(1.0); 4], g).unwrap();
        assert!(matches!(
            recover_echoes_nonblind(&s, &s, 2),
            Err(Error::TooFewFrequencies { .. })
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn permutation_and_scale(seed in 0u64..10_000, gamma in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = FrequencyGrid::new(200.0, 4.5, 9).unwrap();
            let mut delays: Vec<f64> = (0..4).map(|i| 0.02 * i as f64 + rng.random_range(0.0..0.015)).collect();
            let weights: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..1.0)).collect();
            let truth = EchoSet::new(delays.clone(), weights.clone()).unwrap();
            delays.reverse();
            let mut w_rev = weights.clone();
            w_rev.reverse();
            let shuffled = EchoSet::new(delays, w_rev).unwrap();
            let s = Spectrum::new(vec![c(1.0); 9], g).unwrap();
            let a = recover_echoes_nonblind(&synth(g, &truth), &s, 4).unwrap();
            let b = recover_echoes_nonblind(&synth(g, &shuffled), &s, 4).unwrap();
            let scaled = synth(g, &truth).scaled(c(gamma));
            let sc = recover_echoes_nonblind(&scaled, &s, 4).unwrap();
            for i in 0..4 {
                proptest::prop_assert!((a.delays()[i] - truth.delays()[i]).abs() < 1e-9);
                proptest::prop_assert!((a.delays()[i] - b.delays()[i]).abs() < 1e-12);
                proptest::prop_assert!((sc.delays()[i] - a.delays()[i]).abs() < 1e-12);
                proptest::prop_assert!((sc.weights()[i] - gamma * a.weights()[i]).abs() < 1e-8 * gamma);
            }
        }
    }
}
