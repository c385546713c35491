//! Shared three-phase primitives used throughout the crate.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// One of the three phases of the ac system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    /// All phases in `a, b, c` order.
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    /// Zero-based index of the phase (`a → 0`, `b → 1`, `c → 2`).
    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    /// Balanced reference angle of the phase, in radians.
    ///
    /// Phase `a` is the zero reference, `b` lags by 120° and `c` leads by
    /// 120°, so `cos(θ + balanced_angle(p))` generates a positive-sequence
    /// set in `a, b, c` order.
    pub fn balanced_angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * PI / 3.0,
            Phase::C => 2.0 * PI / 3.0,
        }
    }

    /// The next phase in cyclic `a → b → c → a` order.
    pub fn next(self) -> Phase {
        match self {
            Phase::A => Phase::B,
            Phase::B => Phase::C,
            Phase::C => Phase::A,
        }
    }

    /// Lower-case name of the phase (`"a"`, `"b"`, `"c"`).
    pub fn name(self) -> &'static str {
        match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        }
    }
}

/// A value carried per phase.
///
/// Used for measurements, setpoints, controller states and per-phase
/// results. `Index<Phase>` gives checked-by-construction access and the
/// combinators keep per-phase code free of index arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreePhase<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T> ThreePhase<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        Self { a, b, c }
    }

    /// Builds a value by evaluating `f` for each phase.
    pub fn from_fn(mut f: impl FnMut(Phase) -> T) -> Self {
        Self {
            a: f(Phase::A),
            b: f(Phase::B),
            c: f(Phase::C),
        }
    }

    /// Applies `f` to each phase value.
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ThreePhase<U> {
        ThreePhase {
            a: f(&self.a),
            b: f(&self.b),
            c: f(&self.c),
        }
    }

    /// Combines two per-phase values element-wise.
    pub fn zip<U, V>(&self, other: &ThreePhase<U>, mut f: impl FnMut(&T, &U) -> V) -> ThreePhase<V> {
        ThreePhase {
            a: f(&self.a, &other.a),
            b: f(&self.b, &other.b),
            c: f(&self.c, &other.c),
        }
    }

    /// Iterates over `(phase, value)` pairs in `a, b, c` order.
    pub fn iter(&self) -> impl Iterator<Item = (Phase, &T)> {
        [(Phase::A, &self.a), (Phase::B, &self.b), (Phase::C, &self.c)].into_iter()
    }

    pub fn as_array(&self) -> [&T; 3] {
        [&self.a, &self.b, &self.c]
    }
}

impl<T: Clone> ThreePhase<T> {
    /// The same value on every phase.
    pub fn uniform(value: T) -> Self {
        Self {
            a: value.clone(),
            b: value.clone(),
            c: value,
        }
    }
}

impl ThreePhase<f64> {
    /// Arithmetic mean of the three phase values.
    pub fn mean(&self) -> f64 {
        (self.a + self.b + self.c) / 3.0
    }

    /// Largest absolute deviation of any phase from the three-phase mean.
    pub fn max_abs_dev(&self) -> f64 {
        let m = self.mean();
        (self.a - m).abs().max((self.b - m).abs()).max((self.c - m).abs())
    }

    /// Largest absolute value over the phases.
    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs())
    }
}

impl<T> Index<Phase> for ThreePhase<T> {
    type Output = T;

    fn index(&self, phase: Phase) -> &T {
        match phase {
            Phase::A => &self.a,
            Phase::B => &self.b,
            Phase::C => &self.c,
        }
    }
}

impl<T> IndexMut<Phase> for ThreePhase<T> {
    fn index_mut(&mut self, phase: Phase) -> &mut T {
        match phase {
            Phase::A => &mut self.a,
            Phase::B => &mut self.b,
            Phase::C => &mut self.c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_angles_form_positive_sequence() {
        // cos(θ_bal) sampled at θ = 0 must give the classic (1, -1/2, -1/2)
        // snapshot of a balanced set.
        let v = ThreePhase::from_fn(|p| p.balanced_angle().cos());
        assert!((v.a - 1.0).abs() < 1e-12);
        assert!((v.b + 0.5).abs() < 1e-12);
        assert!((v.c + 0.5).abs() < 1e-12);
        // Phase b lags a: its value is still rising toward its own peak.
        let vb_later = (0.1 + Phase::B.balanced_angle()).cos();
        assert!(vb_later > v.b);
    }

    #[test]
    fn index_matches_fields() {
        let x = ThreePhase::new(1.0, 2.0, 3.0);
        assert_eq!(x[Phase::A], 1.0);
        assert_eq!(x[Phase::B], 2.0);
        assert_eq!(x[Phase::C], 3.0);
    }

    #[test]
    fn mean_and_deviation() {
        let x = ThreePhase::new(1.0, 0.9, 1.1);
        assert!((x.mean() - 1.0).abs() < 1e-12);
        assert!((x.max_abs_dev() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cyclic_next() {
        assert_eq!(Phase::A.next(), Phase::B);
        assert_eq!(Phase::B.next(), Phase::C);
        assert_eq!(Phase::C.next(), Phase::A);
    }
}
