//! Offline waveform analysis.
//!
//! These helpers post-process recorded waveforms: extracting fundamental
//! phasors over whole-cycle windows, decomposing a three-phase phasor set
//! into symmetrical components, condensing voltage/power unbalance into
//! scalar factors, tracking rolling cycle maxima and computing total
//! harmonic distortion.

use num_complex::Complex64;
use thiserror::Error;

use crate::types::ThreePhase;

/// Errors produced by the analysis helpers.
#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    /// The window does not span a whole number of fundamental cycles.
    #[error("window of {len} samples is not a whole number of cycles (nearest is {expected} samples for {cycles} cycle(s))")]
    WindowLength {
        len: usize,
        expected: usize,
        cycles: usize,
    },
    /// Parameters that do not define a usable window.
    #[error("invalid analysis parameters: {0}")]
    InvalidParameters(String),
    /// The positive-sequence magnitude vanished, so unbalance factors are
    /// undefined.
    #[error("positive-sequence magnitude is zero; voltage unbalance factor undefined")]
    ZeroPositiveSequence,
    /// The fundamental magnitude vanished, so THD is undefined.
    #[error("fundamental magnitude is zero; THD undefined")]
    ZeroFundamental,
    /// A rolling window longer than the series it should slide over.
    #[error("rolling window of {window} samples exceeds series length {len}")]
    WindowExceedsSeries { window: usize, len: usize },
}

/// Number of samples in `cycles` fundamental cycles at `omega0` rad/s and
/// sample period `dt`, rounded to the nearest sample.
pub fn cycle_samples(omega0: f64, dt: f64, cycles: usize) -> usize {
    (cycles as f64 * 2.0 * std::f64::consts::PI / (omega0 * dt)).round() as usize
}

fn validate_window(len: usize, omega0: f64, dt: f64) -> Result<usize, AnalysisError> {
    if !(omega0 > 0.0) || !(dt > 0.0) {
        return Err(AnalysisError::InvalidParameters(format!(
            "omega0 = {omega0}, dt = {dt}"
        )));
    }
    if len < 4 {
        return Err(AnalysisError::InvalidParameters(format!(
            "window of {len} samples is too short"
        )));
    }
    let samples_per_cycle = 2.0 * std::f64::consts::PI / (omega0 * dt);
    let cycles = (len as f64 / samples_per_cycle).round().max(1.0) as usize;
    let expected = cycle_samples(omega0, dt, cycles);
    if expected != len {
        return Err(AnalysisError::WindowLength {
            len,
            expected,
            cycles,
        });
    }
    Ok(cycles)
}

/// Fundamental phasor of a waveform window by single-bin discrete Fourier
/// projection at `omega0`, scaled to a peak-value phasor with cosine
/// reference: `cos(omega0·t)` over the window maps to `1∠0°`.
///
/// The window must span a whole number of fundamental cycles (rounded to
/// the nearest sample); the phase reference is the first sample.
pub fn fundamental_phasor(
    window: &[f64],
    omega0: f64,
    dt: f64,
) -> Result<Complex64, AnalysisError> {
    validate_window(window.len(), omega0, dt)?;
    Ok(projection(window, omega0, dt))
}

/// Unchecked single-bin projection at an arbitrary frequency.
fn projection(window: &[f64], omega: f64, dt: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, &x) in window.iter().enumerate() {
        let theta = omega * n as f64 * dt;
        acc += x * Complex64::from_polar(1.0, -theta);
    }
    acc * 2.0 / window.len() as f64
}

/// Symmetrical components of a three-phase phasor set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceSet {
    pub positive: Complex64,
    pub negative: Complex64,
    pub zero: Complex64,
}

/// Decomposes per-phase fundamental phasors into positive, negative and
/// zero sequence components.
///
/// Uses the similarity transform with `α = e^(j·2π/3)`: a balanced set in
/// `a, b, c` order — phase `b` lagging `a` by 120° — is pure positive
/// sequence.
pub fn sequence_components(phasors: &ThreePhase<Complex64>) -> SequenceSet {
    let alpha = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let alpha2 = alpha * alpha;
    let (pa, pb, pc) = (phasors.a, phasors.b, phasors.c);
    SequenceSet {
        positive: (pa + alpha * pb + alpha2 * pc) / 3.0,
        negative: (pa + alpha2 * pb + alpha * pc) / 3.0,
        zero: (pa + pb + pc) / 3.0,
    }
}

/// Reconstructs per-phase phasors from symmetrical components (the inverse
/// of [`sequence_components`]).
pub fn phase_set(seq: &SequenceSet) -> ThreePhase<Complex64> {
    let alpha = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let alpha2 = alpha * alpha;
    ThreePhase {
        a: seq.zero + seq.positive + seq.negative,
        b: seq.zero + alpha2 * seq.positive + alpha * seq.negative,
        c: seq.zero + alpha * seq.positive + alpha2 * seq.negative,
    }
}

/// Scalar unbalance measures of an operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbalanceReport {
    /// Voltage unbalance factor `|V⁻|/|V⁺|`.
    pub v_uf: f64,
    /// Largest per-phase deviation of active power from the three-phase
    /// mean.
    pub p_uf: f64,
    /// Largest per-phase deviation of reactive power from the three-phase
    /// mean.
    pub q_uf: f64,
    /// Positive-, negative- and zero-sequence voltage magnitudes behind
    /// `v_uf`.
    pub v_positive: f64,
    pub v_negative: f64,
    pub v_zero: f64,
}

/// Condenses voltage phasors and per-phase powers into unbalance factors.
///
/// Fails if the positive-sequence voltage magnitude is zero, which leaves
/// the voltage unbalance factor undefined.
pub fn unbalance_factors(
    v_phasors: &ThreePhase<Complex64>,
    p: &ThreePhase<f64>,
    q: &ThreePhase<f64>,
) -> Result<UnbalanceReport, AnalysisError> {
    let seq = sequence_components(v_phasors);
    let v_positive = seq.positive.norm();
    if v_positive == 0.0 {
        return Err(AnalysisError::ZeroPositiveSequence);
    }
    Ok(UnbalanceReport {
        v_uf: seq.negative.norm() / v_positive,
        p_uf: p.max_abs_dev(),
        q_uf: q.max_abs_dev(),
        v_positive,
        v_negative: seq.negative.norm(),
        v_zero: seq.zero.norm(),
    })
}

/// Rolling maximum of a series over a trailing window of `window` samples.
///
/// Entry `k` holds the maximum of the last `window` samples ending at `k`
/// (fewer while the window is still filling). Used to track per-cycle
/// maxima of current magnitudes.
pub fn cycle_max_magnitude(series: &[f64], window: usize) -> Result<Vec<f64>, AnalysisError> {
    if window == 0 {
        return Err(AnalysisError::InvalidParameters(
            "rolling window must be at least one sample".into(),
        ));
    }
    if window > series.len() {
        return Err(AnalysisError::WindowExceedsSeries {
            window,
            len: series.len(),
        });
    }
    // Monotonic deque of indices whose values are strictly decreasing.
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut out = Vec::with_capacity(series.len());
    for (k, &x) in series.iter().enumerate() {
        while deque.front().is_some_and(|&i| i + window <= k) {
            deque.pop_front();
        }
        while deque.back().is_some_and(|&i| series[i] <= x) {
            deque.pop_back();
        }
        deque.push_back(k);
        out.push(series[*deque.front().expect("deque holds current index")]);
    }
    Ok(out)
}

/// Total harmonic distortion of a whole-cycle window: the RMS of harmonics
/// `2..=nmax` relative to the fundamental, from single-bin projections at
/// each harmonic. Harmonics at or above the Nyquist frequency are skipped.
pub fn thd(window: &[f64], omega0: f64, dt: f64, nmax: usize) -> Result<f64, AnalysisError> {
    validate_window(window.len(), omega0, dt)?;
    if nmax < 2 {
        return Err(AnalysisError::InvalidParameters(format!(
            "nmax = {nmax} must be at least 2"
        )));
    }
    let fundamental = projection(window, omega0, dt).norm();
    if fundamental == 0.0 {
        return Err(AnalysisError::ZeroFundamental);
    }
    let nyquist = std::f64::consts::PI / dt;
    let mut harmonic_energy = 0.0;
    for n in 2..=nmax {
        let omega_n = n as f64 * omega0;
        if omega_n >= nyquist {
            break;
        }
        harmonic_energy += projection(window, omega_n, dt).norm_sqr();
    }
    Ok(harmonic_energy.sqrt() / fundamental)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // Exact sampling: 200 samples per cycle.
    const OMEGA0: f64 = 2.0 * PI * 50.0;
    const DT: f64 = 1e-4;

    fn sampled(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| f(k as f64 * DT)).collect()
    }

    fn polar(mag: f64, deg: f64) -> Complex64 {
        Complex64::from_polar(mag, deg.to_radians())
    }

    // -- fundamental phasor --------------------------------------------------

    #[test]
    fn cosine_maps_to_unit_phasor() {
        let n = cycle_samples(OMEGA0, DT, 1);
        let x = sampled(|t| (OMEGA0 * t).cos(), n);
        let ph = fundamental_phasor(&x, OMEGA0, DT).unwrap();
        assert!((ph - Complex64::new(1.0, 0.0)).norm() < 1e-6, "phasor {ph}");
    }

    #[test]
    fn sine_lags_ninety_degrees() {
        let n = cycle_samples(OMEGA0, DT, 1);
        let x = sampled(|t| (OMEGA0 * t).sin(), n);
        let ph = fundamental_phasor(&x, OMEGA0, DT).unwrap();
        assert!((ph - Complex64::new(0.0, -1.0)).norm() < 1e-6, "phasor {ph}");
    }

    #[test]
    fn third_harmonic_is_rejected() {
        let n = cycle_samples(OMEGA0, DT, 1);
        let x = sampled(|t| (OMEGA0 * t).cos() + 0.3 * (3.0 * OMEGA0 * t).cos(), n);
        let ph = fundamental_phasor(&x, OMEGA0, DT).unwrap();
        assert!((ph - Complex64::new(1.0, 0.0)).norm() < 1e-6, "phasor {ph}");
    }

    #[test]
    fn multi_cycle_windows_are_accepted() {
        let n = cycle_samples(OMEGA0, DT, 3);
        let x = sampled(|t| 0.8 * (OMEGA0 * t).cos(), n);
        let ph = fundamental_phasor(&x, OMEGA0, DT).unwrap();
        assert!((ph - Complex64::new(0.8, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn wrong_window_length_is_rejected() {
        let x = sampled(|t| (OMEGA0 * t).cos(), 150);
        let err = fundamental_phasor(&x, OMEGA0, DT).unwrap_err();
        assert!(matches!(err, AnalysisError::WindowLength { .. }), "{err:?}");
    }

    #[test]
    fn projection_is_linear() {
        let n = cycle_samples(OMEGA0, DT, 1);
        let x = sampled(|t| (OMEGA0 * t).cos() * 0.5 + 0.1, n);
        let y = sampled(|t| (OMEGA0 * t + 0.7).cos() * 1.3, n);
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let px = fundamental_phasor(&x, OMEGA0, DT).unwrap();
        let py = fundamental_phasor(&y, OMEGA0, DT).unwrap();
        let ps = fundamental_phasor(&sum, OMEGA0, DT).unwrap();
        assert!((ps - (px + py)).norm() < 1e-12);
    }

    // -- symmetrical components ----------------------------------------------

    #[test]
    fn balanced_set_is_pure_positive_sequence() {
        let set = ThreePhase::new(polar(1.0, 0.0), polar(1.0, -120.0), polar(1.0, 120.0));
        let seq = sequence_components(&set);
        assert!((seq.positive - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(seq.negative.norm() < 1e-12);
        assert!(seq.zero.norm() < 1e-12);
    }

    #[test]
    fn reversed_set_is_pure_negative_sequence() {
        let set = ThreePhase::new(polar(1.0, 0.0), polar(1.0, 120.0), polar(1.0, -120.0));
        let seq = sequence_components(&set);
        assert!(seq.positive.norm() < 1e-12);
        assert!((seq.negative - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(seq.zero.norm() < 1e-12);
    }

    #[test]
    fn equal_phasors_are_pure_zero_sequence() {
        let set = ThreePhase::uniform(polar(0.7, 30.0));
        let seq = sequence_components(&set);
        assert!(seq.positive.norm() < 1e-12);
        assert!(seq.negative.norm() < 1e-12);
        assert!((seq.zero - polar(0.7, 30.0)).norm() < 1e-12);
    }

    #[test]
    fn dropped_phase_splits_between_sequences() {
        // Oracle: direct evaluation of the transform matrix on
        // (1∠0°, 0, 1∠120°).
        let set = ThreePhase::new(polar(1.0, 0.0), Complex64::new(0.0, 0.0), polar(1.0, 120.0));
        let seq = sequence_components(&set);
        let alpha = polar(1.0, 120.0);
        let expected_pos = (set.a + alpha * set.b + alpha * alpha * set.c) / 3.0;
        assert!((seq.positive - expected_pos).norm() < 1e-14);
        // Frozen value: V⁺ = (1 + 1∠240°·1∠120°)/3 = 2/3∠0°.
        assert!((seq.positive - Complex64::new(2.0 / 3.0, 0.0)).norm() < 1e-12);
        assert!((seq.zero - (set.a + set.c) / 3.0).norm() < 1e-14);
    }

    #[test]
    fn round_trip_reconstructs_phasors() {
        let set = ThreePhase::new(polar(0.9, 12.0), polar(1.1, -133.0), polar(0.4, 97.0));
        let rebuilt = phase_set(&sequence_components(&set));
        for (p, original) in set.iter() {
            assert!((rebuilt[p] - *original).norm() < 1e-12);
        }
    }

    // -- unbalance factors -----------------------------------------------------

    #[test]
    fn balanced_inputs_give_zero_factors() {
        let v = ThreePhase::new(polar(1.0, 0.0), polar(1.0, -120.0), polar(1.0, 120.0));
        let p = ThreePhase::uniform(0.4);
        let q = ThreePhase::uniform(-0.1);
        let rep = unbalance_factors(&v, &p, &q).unwrap();
        assert!(rep.v_uf < 1e-12);
        assert!(rep.p_uf < 1e-12);
        assert!(rep.q_uf < 1e-12);
        assert!((rep.v_positive - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_spread_sets_power_unbalance() {
        let v = ThreePhase::new(polar(1.0, 0.0), polar(1.0, -120.0), polar(1.0, 120.0));
        let p = ThreePhase::new(1.0, 0.9, 1.1);
        let q = ThreePhase::uniform(0.0);
        let rep = unbalance_factors(&v, &p, &q).unwrap();
        assert!((rep.p_uf - 0.1).abs() < 1e-12, "p_uf {}", rep.p_uf);
        assert!(rep.q_uf.abs() < 1e-12);
    }

    #[test]
    fn constructed_negative_sequence_sets_vuf() {
        // Build 5% negative sequence on top of a unit positive sequence.
        let seq = SequenceSet {
            positive: Complex64::new(1.0, 0.0),
            negative: polar(0.05, 40.0),
            zero: Complex64::new(0.0, 0.0),
        };
        let v = phase_set(&seq);
        let zero = ThreePhase::uniform(0.0);
        let rep = unbalance_factors(&v, &zero, &zero).unwrap();
        assert!((rep.v_uf - 0.05).abs() < 1e-12, "v_uf {}", rep.v_uf);
    }

    #[test]
    fn zero_positive_sequence_is_an_error() {
        let v = ThreePhase::uniform(Complex64::new(0.0, 0.0));
        let zero = ThreePhase::uniform(0.0);
        assert_eq!(
            unbalance_factors(&v, &zero, &zero).unwrap_err(),
            AnalysisError::ZeroPositiveSequence
        );
    }

    // -- rolling cycle maximum ---------------------------------------------------

    #[test]
    fn constant_series_stays_constant() {
        let series = vec![1.0; 500];
        let out = cycle_max_magnitude(&series, 167).unwrap();
        assert!(out.iter().all(|&x| x == 1.0));
        assert_eq!(out.len(), series.len());
    }

    #[test]
    fn spike_is_held_for_exactly_one_window() {
        let mut series = vec![1.0; 400];
        series[100] = 1.5;
        let window = 50;
        let out = cycle_max_magnitude(&series, window).unwrap();
        for (k, &x) in out.iter().enumerate() {
            let expected = if (100..100 + window).contains(&k) { 1.5 } else { 1.0 };
            assert_eq!(x, expected, "index {k}");
        }
    }

    #[test]
    fn rolling_max_matches_brute_force() {
        // Oracle: direct O(n·w) rolling maximum of a deterministic
        // pseudo-random series.
        let series: Vec<f64> = (0..300)
            .map(|k| ((k * 2654435761u64 as usize) % 1000) as f64 / 1000.0)
            .collect();
        let window = 37;
        let fast = cycle_max_magnitude(&series, window).unwrap();
        for k in 0..series.len() {
            let lo = k.saturating_sub(window - 1);
            let brute = series[lo..=k].iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(fast[k], brute, "index {k}");
        }
    }

    #[test]
    fn oversized_window_is_rejected() {
        let series = vec![1.0; 10];
        assert!(matches!(
            cycle_max_magnitude(&series, 11).unwrap_err(),
            AnalysisError::WindowExceedsSeries { .. }
        ));
    }

    // -- THD -----------------------------------------------------------------

    #[test]
    fn pure_sinusoid_has_negligible_thd() {
        let n = cycle_samples(OMEGA0, DT, 1);
        let x = sampled(|t| (OMEGA0 * t).cos(), n);
        assert!(thd(&x, OMEGA0, DT, 50).unwrap() < 1e-9);
    }

    #[test]
    fn ten_percent_third_harmonic_reads_ten_percent() {
        let n = cycle_samples(OMEGA0, DT, 1);
        let x = sampled(|t| (OMEGA0 * t).cos() + 0.1 * (3.0 * OMEGA0 * t).cos(), n);
        let d = thd(&x, OMEGA0, DT, 50).unwrap();
        assert!((d - 0.1).abs() < 1e-9, "thd {d}");
    }

    #[test]
    fn square_wave_matches_fourier_series() {
        // Oracle: the square wave's odd-harmonic series with amplitudes
        // 1/n gives THD ≈ 0.483 when truncated around n = 50 (sampling
        // folds a little of the higher-harmonic energy back in).
        let n = cycle_samples(OMEGA0, DT, 1);
        let x = sampled(
            |t| if (OMEGA0 * t).cos() >= 0.0 { 1.0 } else { -1.0 },
            n,
        );
        let d = thd(&x, OMEGA0, DT, 50).unwrap();
        assert!((d - 0.483).abs() < 0.01, "square-wave thd {d}");
    }

    #[test]
    fn zero_fundamental_is_an_error() {
        let n = cycle_samples(OMEGA0, DT, 1);
        let x = vec![0.0; n];
        assert_eq!(thd(&x, OMEGA0, DT, 50).unwrap_err(), AnalysisError::ZeroFundamental);
    }
}
