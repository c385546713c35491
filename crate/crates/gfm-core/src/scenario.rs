//! Closed-loop studies: timed runs of the converter-to-grid chain under a
//! chosen controller, the coupling-gain sweep over an unbalanced load, and
//! the single-line-to-ground fault ride-through comparison.
//!
//! A run advances on a fixed controller tick (default 100 µs): measure the
//! terminal, step the controller once, then hold its switching-voltage
//! command over an integer number of plant sub-steps. Switching events are
//! pinned to tick boundaries so no integration interval straddles two
//! topologies. Everything is deterministic; identical configurations
//! reproduce bit-identical records.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    cycle_samples, fundamental_phasor, thd, unbalance_factors, AnalysisError, UnbalanceReport,
};
use crate::control::{
    ControlError, Controller, ControllerDiag, DroopParams, GeneralizedController, InnerParams,
    StandardController, TerminalMeasurements,
};
use crate::network::{DeltaLoadParams, NetworkError, Plant, PlantEvent, PlantParams};
use crate::types::{Phase, ThreePhase};

/// Errors from configuring or running a study.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] NetworkError),
    #[error(transparent)]
    Controller(#[from] ControlError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Which controller drives the converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    /// Per-phase droop pairs with adjustable coupling.
    Generalized,
    /// Conventional single-frame droop on three-phase average quantities.
    Standard,
}

/// Switching operations addressable from a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FaultOn,
    FaultClear,
    LoadConnect,
    LoadDisconnect,
}

impl EventKind {
    fn to_plant(self) -> PlantEvent {
        match self {
            EventKind::FaultOn => PlantEvent::FaultOn,
            EventKind::FaultClear => PlantEvent::FaultClear,
            EventKind::LoadConnect => PlantEvent::LoadConnect,
            EventKind::LoadDisconnect => PlantEvent::LoadDisconnect,
        }
    }
}

/// A switching operation pinned to a controller tick boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    /// Event time, seconds; must land on the controller tick grid.
    pub t: f64,
    pub event: EventKind,
}

/// Complete description of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub plant: PlantParams,
    pub droop: DroopParams,
    pub inner: InnerParams,
    pub controller: ControllerKind,
    /// Controller sampling period, seconds; an integer multiple of the
    /// plant step.
    pub control_dt: f64,
    /// Run length, seconds; an integer number of controller ticks.
    pub duration: f64,
    /// Converter angle offset at start, rad. The default matches the
    /// steady angle of the terminal bus behind the two transformer
    /// stages, so hard-starting against an energized grid stays tame.
    pub initial_delta: f64,
    /// Switching events, applied at the start of their tick.
    pub events: Vec<TimedEvent>,
    /// Reserved for future stochastic extensions (e.g. measurement
    /// noise). The present model is deterministic and ignores it.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            plant: PlantParams::default(),
            droop: DroopParams::default(),
            inner: InnerParams::default(),
            controller: ControllerKind::Generalized,
            control_dt: 1e-4,
            duration: 1.0,
            initial_delta: -std::f64::consts::PI / 3.0,
            events: Vec::new(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Number of controller ticks in the run; the record holds one more
    /// row than this (both endpoints included).
    pub fn ticks(&self) -> usize {
        (self.duration / self.control_dt).round() as usize
    }

    /// Plant sub-steps per controller tick.
    pub fn substeps(&self) -> usize {
        (self.control_dt / self.plant.dt).round() as usize
    }

    fn tick_of(&self, t: f64) -> Result<usize, ScenarioError> {
        let k = t / self.control_dt;
        if (k - k.round()).abs() > 1e-6 || k < 0.0 {
            return Err(ScenarioError::Config(format!(
                "time {t} s does not land on the {} s controller tick grid",
                self.control_dt
            )));
        }
        Ok(k.round() as usize)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.plant.validate()?;
        self.droop.validate()?;
        self.inner.validate()?;
        if !(self.control_dt > 0.0) {
            return Err(ScenarioError::Config(format!(
                "control_dt = {} must be positive",
                self.control_dt
            )));
        }
        let sub = self.control_dt / self.plant.dt;
        if (sub - sub.round()).abs() > 1e-6 || sub.round() < 1.0 {
            return Err(ScenarioError::Config(format!(
                "control_dt = {} must be an integer multiple of the plant step {}",
                self.control_dt, self.plant.dt
            )));
        }
        if !(self.duration > 0.0) {
            return Err(ScenarioError::Config(format!(
                "duration = {} must be positive",
                self.duration
            )));
        }
        if self.tick_of(self.duration)? == 0 {
            return Err(ScenarioError::Config(
                "duration must span at least one controller tick".into(),
            ));
        }
        let ticks = self.ticks();
        for ev in &self.events {
            let k = self.tick_of(ev.t)?;
            if k >= ticks {
                return Err(ScenarioError::Config(format!(
                    "event at {} s lies outside the {} s run",
                    ev.t, self.duration
                )));
            }
            let needs_load = matches!(
                ev.event,
                EventKind::LoadConnect | EventKind::LoadDisconnect
            );
            if needs_load && self.plant.load.is_none() {
                return Err(ScenarioError::Config(
                    "load event scheduled on a plant configured without a load".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One controller tick of recorded signals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    /// Tick time, seconds.
    pub t: f64,
    /// Instantaneous terminal voltages, p.u.
    pub v: ThreePhase<f64>,
    /// Instantaneous converter-side filter currents, p.u.
    pub i: ThreePhase<f64>,
    /// Fundamental magnitude of the terminal voltage over the trailing
    /// cycle (zero while the first cycle is still filling).
    pub v_mag: ThreePhase<f64>,
    /// Fundamental magnitude of the converter current over the trailing
    /// cycle.
    pub i_mag: ThreePhase<f64>,
    /// Filtered per-phase active power seen by the controller, p.u.
    pub p: ThreePhase<f64>,
    /// Filtered per-phase reactive power seen by the controller, p.u.
    pub q: ThreePhase<f64>,
    /// Per-phase droop frequency realized this tick, rad/s.
    pub omega: ThreePhase<f64>,
    /// Whether the current limiter clamped each phase this tick.
    pub limiter: ThreePhase<bool>,
}

/// Time series produced by [`run_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub control_dt: f64,
    /// Nominal angular frequency used for all windowed magnitudes, rad/s.
    pub omega0: f64,
    /// Time at which the run aborted on a non-finite signal, if any; the
    /// rows up to that point are kept.
    pub aborted: Option<f64>,
}

impl RunRecord {
    /// Row index of time `t`, clamped to the record.
    pub fn index_at(&self, t: f64) -> usize {
        let k = (t / self.control_dt).round();
        (k.max(0.0) as usize).min(self.rows.len().saturating_sub(1))
    }

    /// Rows between `t0` and `t1` inclusive.
    pub fn between(&self, t0: f64, t1: f64) -> &[RunRow] {
        &self.rows[self.index_at(t0)..=self.index_at(t1)]
    }

    /// One phase of a per-row three-phase channel as a contiguous series.
    pub fn series(&self, ph: Phase, f: impl Fn(&RunRow) -> ThreePhase<f64>) -> Vec<f64> {
        self.rows.iter().map(|r| f(r)[ph]).collect()
    }
}

/// Steady-window condensation of a record: voltage phasors, unbalance
/// factors, and tick-averaged per-phase powers and frequencies.
#[derive(Debug, Clone, Copy)]
pub struct SteadyWindow {
    pub report: UnbalanceReport,
    pub v_phasors: ThreePhase<Complex64>,
    pub p: ThreePhase<f64>,
    pub q: ThreePhase<f64>,
    /// Tick-averaged per-phase droop frequency, rad/s.
    pub omega: ThreePhase<f64>,
}

/// Condenses the `cycles`-cycle window of rows ending at `end` (inclusive).
pub fn steady_window(
    record: &RunRecord,
    end: usize,
    cycles: usize,
) -> Result<SteadyWindow, ScenarioError> {
    let n = cycle_samples(record.omega0, record.control_dt, cycles);
    if end >= record.rows.len() || end + 1 < n {
        return Err(ScenarioError::Config(format!(
            "window of {n} rows ending at {end} exceeds the {}-row record",
            record.rows.len()
        )));
    }
    let rows = &record.rows[end + 1 - n..=end];
    let mut v_phasors = ThreePhase::uniform(Complex64::new(0.0, 0.0));
    for ph in Phase::ALL {
        let series: Vec<f64> = rows.iter().map(|r| r.v[ph]).collect();
        v_phasors[ph] = fundamental_phasor(&series, record.omega0, record.control_dt)?;
    }
    let mut p = ThreePhase::uniform(0.0);
    let mut q = ThreePhase::uniform(0.0);
    let mut omega = ThreePhase::uniform(0.0);
    for r in rows {
        for ph in Phase::ALL {
            p[ph] += r.p[ph];
            q[ph] += r.q[ph];
            omega[ph] += r.omega[ph];
        }
    }
    let scale = 1.0 / rows.len() as f64;
    let p = p.map(|&x| x * scale);
    let q = q.map(|&x| x * scale);
    let omega = omega.map(|&x| x * scale);
    let report = unbalance_factors(&v_phasors, &p, &q)?;
    Ok(SteadyWindow {
        report,
        v_phasors,
        p,
        q,
        omega,
    })
}

/// Per-phase total harmonic distortion of the terminal voltage over the
/// `cycles`-cycle window of rows ending at `end` (inclusive).
pub fn window_thd(
    record: &RunRecord,
    end: usize,
    cycles: usize,
    nmax: usize,
) -> Result<ThreePhase<f64>, ScenarioError> {
    let n = cycle_samples(record.omega0, record.control_dt, cycles);
    if end >= record.rows.len() || end + 1 < n {
        return Err(ScenarioError::Config(format!(
            "window of {n} rows ending at {end} exceeds the {}-row record",
            record.rows.len()
        )));
    }
    let rows = &record.rows[end + 1 - n..=end];
    let mut out = ThreePhase::uniform(0.0);
    for ph in Phase::ALL {
        let series: Vec<f64> = rows.iter().map(|r| r.v[ph]).collect();
        out[ph] = thd(&series, record.omega0, record.control_dt, nmax)?;
    }
    Ok(out)
}

fn build_controller(config: &ScenarioConfig) -> Result<Controller, ControlError> {
    Ok(match config.controller {
        ControllerKind::Generalized => {
            Controller::Generalized(Box::new(GeneralizedController::new(
                config.droop.clone(),
                config.inner.clone(),
                config.control_dt,
                ThreePhase::uniform(config.initial_delta),
            )?))
        }
        ControllerKind::Standard => Controller::Standard(Box::new(StandardController::new(
            config.droop.clone(),
            config.inner.clone(),
            config.control_dt,
            config.initial_delta,
        )?)),
    })
}

fn all_finite(meas: &TerminalMeasurements) -> bool {
    meas.v.iter().all(|(_, x)| x.is_finite())
        && meas.i.iter().all(|(_, x)| x.is_finite())
        && meas.i_o.iter().all(|(_, x)| x.is_finite())
}

/// Runs one closed-loop scenario to completion (or to a non-finite abort)
/// and returns the tick-rate record, rows at both endpoints inclusive.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunRecord, ScenarioError> {
    config.validate()?;
    let mut plant = Plant::new(config.plant.clone())?;
    // Start from the power-frequency steady state under the controller's
    // initial open-loop command, so runs begin at an energized operating
    // point instead of a black start.
    let conv = ThreePhase::from_fn(|ph| {
        Complex64::from_polar(
            config.droop.v_star[ph],
            config.initial_delta + ph.balanced_angle(),
        )
    });
    plant.init_steady_state(&conv, config.droop.omega0)?;
    let mut controller = build_controller(config)?;
    let dt_c = config.control_dt;
    let dt_p = config.plant.dt;
    let ticks = config.ticks();
    let substeps = config.substeps();
    let window = cycle_samples(config.droop.omega0, dt_c, 1);

    let mut schedule: Vec<(usize, EventKind)> = config
        .events
        .iter()
        .map(|ev| {
            let k = (ev.t / dt_c).round() as usize;
            (k, ev.event)
        })
        .collect();
    schedule.sort_by_key(|&(k, _)| k);
    let mut next_event = 0;

    let mut rows: Vec<RunRow> = Vec::with_capacity(ticks + 1);
    let mut held = ThreePhase::from_fn(|ph| {
        config.droop.v_star[ph] * (config.initial_delta + ph.balanced_angle()).cos()
    });
    let mut last_diag: Option<ControllerDiag> = None;
    let mut aborted = None;
    let mut scratch = vec![0.0_f64; window];

    for k in 0..=ticks {
        let t = k as f64 * dt_c;
        while next_event < schedule.len() && schedule[next_event].0 == k {
            plant.apply(schedule[next_event].1.to_plant())?;
            next_event += 1;
        }
        let meas = plant.measure(&held, t);
        if !all_finite(&meas) {
            aborted = Some(t);
            break;
        }
        let diag = if k < ticks {
            let out = controller.step(&meas, t);
            held = out.v_sw;
            last_diag = Some(out.diag);
            out.diag
        } else {
            last_diag.expect("a run spans at least one controller tick")
        };

        let windowed = |rows: &[RunRow],
                        scratch: &mut [f64],
                        channel: fn(&RunRow) -> ThreePhase<f64>,
                        latest: ThreePhase<f64>|
         -> ThreePhase<f64> {
            // Trailing window ends at the current row, which is not yet
            // pushed: take `window - 1` rows back plus the fresh sample.
            ThreePhase::from_fn(|ph| {
                for (slot, row) in scratch[..window - 1]
                    .iter_mut()
                    .zip(&rows[rows.len() + 1 - window..])
                {
                    *slot = channel(row)[ph];
                }
                scratch[window - 1] = latest[ph];
                fundamental_phasor(scratch, config.droop.omega0, dt_c)
                    .expect("window length matches one cycle by construction")
                    .norm()
            })
        };
        let (v_mag, i_mag) = if k + 1 >= window {
            (
                windowed(&rows, &mut scratch, |r| r.v, meas.v),
                windowed(&rows, &mut scratch, |r| r.i, meas.i),
            )
        } else {
            (ThreePhase::uniform(0.0), ThreePhase::uniform(0.0))
        };

        rows.push(RunRow {
            t,
            v: meas.v,
            i: meas.i,
            v_mag,
            i_mag,
            p: diag.p,
            q: diag.q,
            omega: diag.omega,
            limiter: diag.limiter,
        });

        if k < ticks {
            for s in 0..substeps {
                plant.step(&held, t + s as f64 * dt_p);
            }
        }
    }

    Ok(RunRecord {
        rows,
        control_dt: dt_c,
        omega0: config.droop.omega0,
        aborted,
    })
}

// ---------------------------------------------------------------------------
// Coupling-gain sweep
// ---------------------------------------------------------------------------

/// Default coupling-gain grid for the unbalanced-load sweep.
pub fn default_ks_grid() -> Vec<f64> {
    vec![0.0, 0.1, 1.0, 10.0, 100.0, 1e3, 1e5]
}

/// Run lengths tried in turn until two successive steady windows agree.
const SWEEP_DURATIONS: [f64; 3] = [2.0, 4.0, 8.0];
/// Width of each steady window, fundamental cycles.
const SWEEP_WINDOW_CYCLES: usize = 3;
/// Agreement required between successive windows per unbalance factor.
const SWEEP_TOLERANCE: f64 = 1e-4;

/// One point of the coupling-gain sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub k_s: f64,
    /// Unbalance factors over the final steady window.
    pub report: UnbalanceReport,
    /// Tick-averaged per-phase powers over the same window, p.u.
    pub p: ThreePhase<f64>,
    pub q: ThreePhase<f64>,
    /// Run length that produced the window, seconds.
    pub duration: f64,
    /// Whether successive windows agreed within tolerance; rows that ran
    /// out of extensions are reported anyway and flagged.
    pub converged: bool,
}

/// Baseline configuration of the sweep study: generalized controller
/// against the unbalanced delta load, no fault.
pub fn sweep_base_config() -> ScenarioConfig {
    let mut config = ScenarioConfig::default();
    config.plant.load = Some(DeltaLoadParams::unbalanced_default());
    config.duration = SWEEP_DURATIONS[0];
    config
}

fn sweep_point(base: &ScenarioConfig, k_s: f64) -> Result<SweepRow, ScenarioError> {
    let mut config = base.clone();
    config.droop.k_s = k_s;
    for (attempt, &duration) in SWEEP_DURATIONS.iter().enumerate() {
        config.duration = duration;
        let record = run_scenario(&config)?;
        if let Some(t) = record.aborted {
            return Err(ScenarioError::Config(format!(
                "sweep run at k_s = {k_s} diverged at t = {t} s"
            )));
        }
        let width = cycle_samples(record.omega0, record.control_dt, SWEEP_WINDOW_CYCLES);
        let end = record.rows.len() - 1;
        let late = steady_window(&record, end, SWEEP_WINDOW_CYCLES)?;
        let early = steady_window(&record, end - width, SWEEP_WINDOW_CYCLES)?;
        let converged = (late.report.v_uf - early.report.v_uf).abs() <= SWEEP_TOLERANCE
            && (late.report.p_uf - early.report.p_uf).abs() <= SWEEP_TOLERANCE
            && (late.report.q_uf - early.report.q_uf).abs() <= SWEEP_TOLERANCE;
        if converged || attempt + 1 == SWEEP_DURATIONS.len() {
            return Ok(SweepRow {
                k_s,
                report: late.report,
                p: late.p,
                q: late.q,
                duration,
                converged,
            });
        }
    }
    unreachable!("loop returns on the last attempt")
}

/// Sweeps the phase-coupling gain over `grid`, one steady-state run per
/// point, in parallel. Rows come back in grid order.
pub fn sweep_ks(base: &ScenarioConfig, grid: &[f64]) -> Result<Vec<SweepRow>, ScenarioError> {
    base.validate()?;
    grid.par_iter()
        .map(|&k_s| sweep_point(base, k_s))
        .collect()
}

// ---------------------------------------------------------------------------
// Fault ride-through study
// ---------------------------------------------------------------------------

/// Fault dwell: ten nominal cycles snapped to the controller tick grid
/// (166.7 ms at 60 Hz, exactly 200 ms at 50 Hz).
pub fn fault_dwell(omega0: f64, control_dt: f64) -> f64 {
    let ten_cycles = 10.0 * 2.0 * std::f64::consts::PI / omega0;
    (ten_cycles / control_dt).round() * control_dt
}

/// Inception time of the fault in the ride-through study, seconds.
pub const FAULT_STUDY_ONSET: f64 = 1.5;
/// Total length of the ride-through study, seconds.
pub const FAULT_STUDY_DURATION: f64 = 3.0;

/// Canonical fault ride-through configuration: no local load, strong
/// phase coupling for the generalized controller, a ten-cycle fault on
/// high-voltage circuit 0 phase a.
pub fn fault_study_config(kind: ControllerKind) -> ScenarioConfig {
    let mut config = ScenarioConfig::default();
    config.controller = kind;
    config.duration = FAULT_STUDY_DURATION;
    config.droop.k_s = 1e5;
    config.plant.load = None;
    let t_clear = FAULT_STUDY_ONSET + fault_dwell(config.droop.omega0, config.control_dt);
    config.events = vec![
        TimedEvent {
            t: FAULT_STUDY_ONSET,
            event: EventKind::FaultOn,
        },
        TimedEvent {
            t: t_clear,
            event: EventKind::FaultClear,
        },
    ];
    config
}

/// Fault and clearing times of a configured scenario, if it has both.
pub fn fault_times(config: &ScenarioConfig) -> Option<(f64, f64)> {
    let on = config
        .events
        .iter()
        .find(|ev| ev.event == EventKind::FaultOn)?;
    let off = config
        .events
        .iter()
        .find(|ev| ev.event == EventKind::FaultClear)?;
    Some((on.t, off.t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn short_config(duration: f64) -> ScenarioConfig {
        let mut config = ScenarioConfig::default();
        config.duration = duration;
        config
    }

    #[test]
    fn record_has_one_row_per_tick_plus_endpoint() {
        let config = short_config(0.05);
        let record = run_scenario(&config).unwrap();
        assert_eq!(record.rows.len(), config.ticks() + 1);
        assert_eq!(record.rows.len(), 501);
        assert!(record.aborted.is_none());
        let last = record.rows.last().unwrap();
        assert!((last.t - 0.05).abs() < 1e-12);
        for pair in record.rows.windows(2) {
            let dt = pair[1].t - pair[0].t;
            assert!((dt - config.control_dt).abs() < 1e-12, "uneven tick {dt}");
        }
    }

    #[test]
    fn magnitude_channels_stay_zero_through_the_first_cycle() {
        let record = run_scenario(&short_config(0.05)).unwrap();
        let window = cycle_samples(record.omega0, record.control_dt, 1);
        for row in &record.rows[..window - 1] {
            assert_eq!(row.v_mag, ThreePhase::uniform(0.0));
            assert_eq!(row.i_mag, ThreePhase::uniform(0.0));
        }
        assert!(record.rows[window - 1].v_mag.a > 0.0);
    }

    #[test]
    fn identical_configurations_reproduce_identical_records() {
        let config = short_config(0.08);
        let one = run_scenario(&config).unwrap();
        let two = run_scenario(&config).unwrap();
        assert_eq!(one.rows.len(), two.rows.len());
        for (a, b) in one.rows.iter().zip(&two.rows) {
            for ph in Phase::ALL {
                assert_eq!(a.v[ph].to_bits(), b.v[ph].to_bits());
                assert_eq!(a.i[ph].to_bits(), b.i[ph].to_bits());
                assert_eq!(a.p[ph].to_bits(), b.p[ph].to_bits());
            }
        }
    }

    #[test]
    fn closed_loop_run_settles_near_nominal_voltage() {
        let record = run_scenario(&short_config(0.4)).unwrap();
        assert!(record.aborted.is_none());
        let last = record.rows.last().unwrap();
        for ph in Phase::ALL {
            assert!(
                (last.v_mag[ph] - 1.0).abs() < 0.2,
                "phase {} magnitude {} far from nominal",
                ph.name(),
                last.v_mag[ph]
            );
            assert!(!last.limiter[ph], "limiter active in steady state");
        }
    }

    #[test]
    fn events_split_the_trajectory_exactly_at_their_tick() {
        let mut with_event = short_config(0.1);
        with_event.events = vec![TimedEvent {
            t: 0.05,
            event: EventKind::FaultOn,
        }];
        let plain = run_scenario(&short_config(0.1)).unwrap();
        let faulted = run_scenario(&with_event).unwrap();
        let k = (0.05 / with_event.control_dt).round() as usize;
        for (a, b) in plain.rows[..k].iter().zip(&faulted.rows[..k]) {
            assert_eq!(a.v.a.to_bits(), b.v.a.to_bits(), "diverged before event");
        }
        let after_differs = plain.rows[k..]
            .iter()
            .zip(&faulted.rows[k..])
            .any(|(a, b)| (a.v.a - b.v.a).abs() > 1e-3);
        assert!(after_differs, "fault left no trace on the record");
    }

    #[test]
    fn misaligned_event_time_is_rejected() {
        let mut config = short_config(0.1);
        config.events = vec![TimedEvent {
            t: 0.05003,
            event: EventKind::FaultOn,
        }];
        assert!(matches!(
            run_scenario(&config),
            Err(ScenarioError::Config(_))
        ));
    }

    #[test]
    fn off_grid_duration_is_rejected() {
        let config = short_config(0.10007);
        assert!(matches!(
            run_scenario(&config),
            Err(ScenarioError::Config(_))
        ));
    }

    #[test]
    fn fractional_substep_ratio_is_rejected() {
        let mut config = short_config(0.1);
        config.control_dt = 2.5e-5;
        assert!(matches!(
            run_scenario(&config),
            Err(ScenarioError::Config(_))
        ));
    }

    #[test]
    fn load_events_need_a_configured_load() {
        let mut config = short_config(0.1);
        config.plant.load = None;
        config.events = vec![TimedEvent {
            t: 0.05,
            event: EventKind::LoadDisconnect,
        }];
        assert!(matches!(
            run_scenario(&config),
            Err(ScenarioError::Config(_))
        ));
    }

    #[test]
    fn fault_dwell_snaps_to_the_tick_grid() {
        let sixty = fault_dwell(2.0 * PI * 60.0, 1e-4);
        assert!((sixty - 0.1667).abs() < 1e-12, "got {sixty}");
        let fifty = fault_dwell(2.0 * PI * 50.0, 1e-4);
        assert!((fifty - 0.2).abs() < 1e-12, "got {fifty}");
    }

    #[test]
    fn fault_study_config_places_the_ten_cycle_window() {
        let config = fault_study_config(ControllerKind::Generalized);
        config.validate().unwrap();
        let (on, off) = fault_times(&config).unwrap();
        assert!((on - 1.5).abs() < 1e-12);
        assert!((off - 1.6667).abs() < 1e-12);
        assert!(config.plant.load.is_none());
        assert_eq!(config.droop.k_s, 1e5);
    }

    #[test]
    fn steady_window_rejects_short_records() {
        let record = run_scenario(&short_config(0.02)).unwrap();
        let err = steady_window(&record, record.rows.len() - 1, 3);
        assert!(matches!(err, Err(ScenarioError::Config(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut config = fault_study_config(ControllerKind::Standard);
        config.plant.load = Some(DeltaLoadParams::unbalanced_default());
        let text = toml::to_string(&config).unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }
}
