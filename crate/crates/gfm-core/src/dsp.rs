//! Single-phase signal-processing blocks.
//!
//! The per-phase controller treats each phase as an independent single-phase
//! system. Orthogonal signal components are produced by delaying the
//! measured waveform a quarter period, after which a rotation into a frame
//! at the phase's own angle yields dq components, and the single-phase
//! active/reactive powers follow from the in-phase/quadrature pair. The
//! double-frequency ripple inherent to that power construction is removed
//! with a notch filter centred at twice the phase frequency.

use std::collections::VecDeque;
use std::f64::consts::PI;

use thiserror::Error;

/// Errors produced by the signal blocks.
#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    /// A delayed sample was requested from before the start of the stored
    /// history (typically during the first quarter period after start-up).
    #[error("insufficient history: requested t = {requested:.6} s but stored span is [{oldest:.6}, {newest:.6}] s")]
    InsufficientHistory {
        requested: f64,
        oldest: f64,
        newest: f64,
    },
    /// A quadrature query needs a positive frequency to define the quarter
    /// period.
    #[error("non-positive frequency {omega} rad/s in quadrature query")]
    NonPositiveFrequency { omega: f64 },
    /// Filter design parameters that do not yield a stable discrete filter.
    #[error("invalid notch design: centre {center} rad/s, quality {quality}, dt {dt} s (centre must lie in (0, pi/dt) and quality must be positive)")]
    InvalidNotchDesign { center: f64, quality: f64, dt: f64 },
}

// ---------------------------------------------------------------------------
// dq rotation and per-phase power
// ---------------------------------------------------------------------------

/// A phasor expressed in a rotating dq frame, peak scaled: a unit-amplitude
/// cosine aligned with the frame maps to `d = 1, q = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhasorDq {
    pub d: f64,
    pub q: f64,
}

impl PhasorDq {
    pub fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    /// Euclidean magnitude of the phasor.
    pub fn magnitude(&self) -> f64 {
        self.d.hypot(self.q)
    }
}

/// Rotates an in-phase/quadrature pair into a frame at angle `theta`.
///
/// Equivalent to multiplying the complex signal `x + j·x_perp` by
/// `e^(-j·theta)`: a waveform `cos(theta)` with quadrature `sin(theta)`
/// maps to `(1, 0)` for any `theta`.
pub fn rotate_to_dq(x: f64, x_perp: f64, theta: f64) -> PhasorDq {
    let (sin, cos) = theta.sin_cos();
    PhasorDq {
        d: x * cos + x_perp * sin,
        q: -x * sin + x_perp * cos,
    }
}

/// Reconstructs the instantaneous waveform value of a dq phasor at frame
/// angle `theta` (the inverse of [`rotate_to_dq`], keeping the in-phase
/// component).
pub fn rotate_from_dq(dq: PhasorDq, theta: f64) -> f64 {
    let (sin, cos) = theta.sin_cos();
    dq.d * cos - dq.q * sin
}

/// Single-phase active and reactive power from in-phase/quadrature pairs of
/// voltage and current, peak scaled.
///
/// For `v = V·cos(ωt)` and `i = I·cos(ωt − φ)` this returns
/// `P = V·I/2·cos(φ)` and `Q = V·I/2·sin(φ)`: a lagging current yields
/// positive reactive power.
pub fn phase_power(v: (f64, f64), i: (f64, f64)) -> (f64, f64) {
    let (v0, v90) = v;
    let (i0, i90) = i;
    let p = 0.5 * (v0 * i0 + v90 * i90);
    let q = 0.5 * (v90 * i0 - v0 * i90);
    (p, q)
}

// ---------------------------------------------------------------------------
// Delay line
// ---------------------------------------------------------------------------

/// A bounded history of `(time, sample)` pairs with linear interpolation,
/// used to delay a waveform by a quarter period.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: VecDeque<(f64, f64)>,
    capacity: usize,
}

impl DelayLine {
    /// Creates a delay line storing up to `capacity` samples. With uniform
    /// sampling the usable delay span is `(capacity - 1)` sample periods.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "delay line needs at least two samples to interpolate");
        Self {
            buf: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Capacity sized to hold `span` seconds of history at sample period
    /// `dt`, with one extra sample so the full span stays interpolable.
    pub fn with_span(span: f64, dt: f64) -> Self {
        let n = (span / dt).ceil() as usize + 2;
        Self::new(n)
    }

    /// Appends a sample taken at time `t`. Times must be strictly
    /// increasing; the oldest sample is dropped once `capacity` is reached.
    pub fn push(&mut self, t: f64, x: f64) {
        debug_assert!(
            self.buf.back().is_none_or(|&(t_last, _)| t > t_last),
            "delay line times must be strictly increasing"
        );
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back((t, x));
    }

    /// Number of stored samples.
    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// The waveform value at time `t`, linearly interpolated between the
    /// two bracketing samples.
    pub fn value_at(&self, t: f64) -> Result<f64, DspError> {
        let (&(t0, _), &(t1, _)) = match (self.buf.front(), self.buf.back()) {
            (Some(front), Some(back)) => (front, back),
            _ => {
                return Err(DspError::InsufficientHistory {
                    requested: t,
                    oldest: f64::NAN,
                    newest: f64::NAN,
                })
            }
        };
        if t < t0 || t > t1 {
            return Err(DspError::InsufficientHistory {
                requested: t,
                oldest: t0,
                newest: t1,
            });
        }
        // Binary search over monotonically increasing times.
        let idx = self
            .buf
            .partition_point(|&(ti, _)| ti <= t);
        if idx == 0 {
            return Ok(self.buf[0].1);
        }
        if idx == self.buf.len() {
            return Ok(self.buf[self.buf.len() - 1].1);
        }
        let (ta, xa) = self.buf[idx - 1];
        let (tb, xb) = self.buf[idx];
        let w = (t - ta) / (tb - ta);
        Ok(xa + w * (xb - xa))
    }

    /// The quadrature (90° delayed) component at time `t` for a waveform at
    /// angular frequency `omega`: the stored value a quarter period
    /// `(2π/omega)/4` earlier. For `cos(ω t)` this returns `sin(ω t)` up to
    /// interpolation error.
    pub fn quadrature(&self, omega: f64, t: f64) -> Result<f64, DspError> {
        if omega <= 0.0 {
            return Err(DspError::NonPositiveFrequency { omega });
        }
        let quarter_period = 0.5 * PI / omega;
        self.value_at(t - quarter_period)
    }
}

// ---------------------------------------------------------------------------
// Notch filter
// ---------------------------------------------------------------------------

/// A discrete biquad notch filter with unity dc gain.
///
/// Designed by bilinear transform with frequency prewarping, so the
/// transmission zeros land exactly on the unit circle at the requested
/// centre frequency: a sinusoid at the centre is rejected completely in
/// steady state while dc passes unchanged.
#[derive(Debug, Clone)]
pub struct NotchFilter {
    center: f64,
    quality: f64,
    dt: f64,
    /// Numerator coefficients `b0, b1, b2` (normalized by `a0`).
    b: [f64; 3],
    /// Denominator coefficients `a1, a2` (normalized by `a0`).
    a: [f64; 2],
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl NotchFilter {
    /// Designs a notch at `center` rad/s with the given quality factor for
    /// sample period `dt`. Fails if the centre does not lie strictly below
    /// the Nyquist frequency or the quality factor is not positive.
    pub fn new(center: f64, quality: f64, dt: f64) -> Result<Self, DspError> {
        let mut f = Self {
            center,
            quality,
            dt,
            b: [0.0; 3],
            a: [0.0; 2],
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        };
        f.design(center)?;
        Ok(f)
    }

    fn design(&mut self, center: f64) -> Result<(), DspError> {
        let w0 = center * self.dt;
        if !(w0 > 0.0 && w0 < PI) || !(self.quality > 0.0) || !w0.is_finite() {
            return Err(DspError::InvalidNotchDesign {
                center,
                quality: self.quality,
                dt: self.dt,
            });
        }
        let (sin_w0, cos_w0) = w0.sin_cos();
        let alpha = sin_w0 / (2.0 * self.quality);
        let a0 = 1.0 + alpha;
        self.b = [1.0 / a0, -2.0 * cos_w0 / a0, 1.0 / a0];
        self.a = [-2.0 * cos_w0 / a0, (1.0 - alpha) / a0];
        self.center = center;
        Ok(())
    }

    /// Re-centres the notch, keeping quality factor, sample period and the
    /// internal signal history.
    pub fn retune(&mut self, center: f64) -> Result<(), DspError> {
        if center == self.center {
            return Ok(());
        }
        self.design(center)
    }

    /// Centre frequency in rad/s.
    pub fn center(&self) -> f64 {
        self.center
    }

    /// Advances the filter by one sample.
    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.b[0] * u + self.b[1] * self.x1 + self.b[2] * self.x2
            - self.a[0] * self.y1
            - self.a[1] * self.y2;
        self.x2 = self.x1;
        self.x1 = u;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    /// Magnitude of the discrete transfer function at `omega` rad/s,
    /// evaluated directly from the coefficients.
    pub fn gain_at(&self, omega: f64) -> f64 {
        use num_complex::Complex64;
        let z_inv = Complex64::from_polar(1.0, -omega * self.dt);
        let num = self.b[0] + z_inv * self.b[1] + z_inv * z_inv * self.b[2];
        let den = 1.0 + z_inv * self.a[0] + z_inv * z_inv * self.a[1];
        (num / den).norm()
    }

    /// Resets the signal history to zero without changing the design.
    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.x2 = 0.0;
        self.y1 = 0.0;
        self.y2 = 0.0;
    }
}

// ---------------------------------------------------------------------------
// PI regulator
// ---------------------------------------------------------------------------

/// A discrete PI regulator with trapezoidal integration.
///
/// The integrator treats the error as constant before the first sample, so
/// a constant error `e` held for `n` steps accumulates exactly
/// `ki·e·n·dt`. Clamps are optional and symmetric; by default the regulator
/// is unclamped and will wind up while a downstream limiter is active.
#[derive(Debug, Clone)]
pub struct PiControl {
    pub kp: f64,
    pub ki: f64,
    integrator: f64,
    prev_error: Option<f64>,
    output_limit: Option<f64>,
    integrator_limit: Option<f64>,
}

impl PiControl {
    pub fn new(kp: f64, ki: f64) -> Self {
        Self {
            kp,
            ki,
            integrator: 0.0,
            prev_error: None,
            output_limit: None,
            integrator_limit: None,
        }
    }

    /// Clamps the regulator output to `±limit`.
    pub fn with_output_limit(mut self, limit: f64) -> Self {
        self.output_limit = Some(limit.abs());
        self
    }

    /// Clamps the accumulated integrator to `±limit` (a simple anti-windup).
    pub fn with_integrator_limit(mut self, limit: f64) -> Self {
        self.integrator_limit = Some(limit.abs());
        self
    }

    /// Current integrator value.
    pub fn integrator(&self) -> f64 {
        self.integrator
    }

    /// Advances the regulator by one sample of error `e` over period `dt`
    /// and returns the control output `kp·e + ∫ki·e`.
    pub fn step(&mut self, e: f64, dt: f64) -> f64 {
        let prev = self.prev_error.unwrap_or(e);
        self.integrator += self.ki * dt * 0.5 * (e + prev);
        if let Some(limit) = self.integrator_limit {
            self.integrator = self.integrator.clamp(-limit, limit);
        }
        self.prev_error = Some(e);
        let y = self.kp * e + self.integrator;
        match self.output_limit {
            Some(limit) => y.clamp(-limit, limit),
            None => y,
        }
    }

    /// Clears the integrator and error history.
    pub fn reset(&mut self) {
        self.integrator = 0.0;
        self.prev_error = None;
    }
}
