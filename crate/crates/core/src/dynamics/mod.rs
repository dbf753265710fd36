//! Thrust-limited planar point-mass model with PD trajectory tracking, and a
//! nearest-neighbor classifier of controllable maneuvers.

mod classifier;

pub use classifier::{
    generate_classifier_dataset, label_sample, read_dataset, write_dataset, ClassifierError, ClassifierReport,
    ClassifierSet, DatasetConfig, FailureClassifier, LabeledSample, DEFAULT_FOLDS, DEFAULT_K,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Vec2;
use crate::trajectory::PolySpline;

pub const GRAVITY: f64 = 9.81;

/// Physical parameters of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavSpec {
    /// kg
    pub mass: f64,
    /// m
    pub diameter: f64,
    /// Maximum total thrust as a multiple of weight.
    pub thrust_to_weight: f64,
    /// m/s
    pub cruise_speed: f64,
}

impl Default for UavSpec {
    fn default() -> Self {
        Self { mass: 1.0, diameter: 0.71, thrust_to_weight: 8.0, cruise_speed: 16.67 }
    }
}

impl UavSpec {
    /// Collision threshold, twice the diameter.
    pub fn d_col(&self) -> f64 {
        2.0 * self.diameter
    }

    /// Maximum total thrust in N.
    pub fn max_thrust(&self) -> f64 {
        self.thrust_to_weight * self.mass * GRAVITY
    }

    /// Horizontal force left after the vertical component holds the weight.
    pub fn horizontal_force_budget(&self) -> f64 {
        let t = self.max_thrust();
        let w = self.mass * GRAVITY;
        (t * t - w * w).max(0.0).sqrt()
    }

    /// Largest horizontal acceleration the vehicle can command.
    pub fn max_horizontal_accel(&self) -> f64 {
        self.horizontal_force_budget() / self.mass
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let ok = [self.mass, self.diameter, self.thrust_to_weight, self.cruise_speed]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !ok || self.thrust_to_weight <= 1.0 {
            return Err(SimulationError::InvalidSpec(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    /// Scale on the reference acceleration added to the command.
    pub feedforward: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        // critically damped: kd^2 = 4 kp
        Self { kp: 16.0, kd: 8.0, feedforward: 1.0 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("time step {0} outside (0, 0.05]")]
    InvalidStep(f64),
    #[error("gains must be non-negative and finite: {0:?}")]
    InvalidGains(PdGains),
    #[error("invalid vehicle spec: {0:?}")]
    InvalidSpec(UavSpec),
    #[error("state became non-finite at t={0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub position: Vec2,
    pub velocity: Vec2,
    pub reference: Vec2,
}

/// Simulated response of one vehicle tracking a spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedTrace {
    pub dt: f64,
    pub points: Vec<TracePoint>,
    pub max_tracking_error: f64,
    /// Fraction of steps whose unclamped command exceeded the thrust budget.
    pub saturation_fraction: f64,
}

type State = (Vec2, Vec2);

/// Integrates the tracking loop with fixed-step RK4 from the spline's start
/// state over its whole time span.
pub fn simulate_tracking(
    spline: &PolySpline,
    spec: &UavSpec,
    gains: &PdGains,
    dt: f64,
) -> Result<ExecutedTrace, SimulationError> {
    let t0 = spline.start_time();
    simulate_from(spline, spec, gains, dt, (spline.position(t0), spline.velocity(t0)))
}

/// As [`simulate_tracking`] with an explicit initial position and velocity.
pub fn simulate_from(
    spline: &PolySpline,
    spec: &UavSpec,
    gains: &PdGains,
    dt: f64,
    initial: State,
) -> Result<ExecutedTrace, SimulationError> {
    if !(dt > 0.0 && dt <= 0.05) {
        return Err(SimulationError::InvalidStep(dt));
    }
    let finite_non_neg = |v: f64| v.is_finite() && v >= 0.0;
    if !(finite_non_neg(gains.kp) && finite_non_neg(gains.kd) && finite_non_neg(gains.feedforward)) {
        return Err(SimulationError::InvalidGains(*gains));
    }
    spec.validate()?;

    let budget = spec.horizontal_force_budget();
    let mass = spec.mass;
    let command = |t: f64, (p, v): State| -> (Vec2, bool) {
        let u = spline.acceleration(t) * (mass * gains.feedforward)
            + (spline.position(t) - p) * gains.kp
            + (spline.velocity(t) - v) * gains.kd;
        let n = u.norm();
        if n > budget {
            (u * (budget / n), true)
        } else {
            (u, false)
        }
    };
    let deriv = |t: f64, s: State| -> State { (s.1, command(t, s).0 / mass) };

    let (t_start, t_end) = (spline.start_time(), spline.end_time());
    let steps = ((t_end - t_start) / dt).ceil().max(1.0) as usize;
    let mut points = Vec::with_capacity(steps + 1);
    let mut state = initial;
    let mut saturated = 0usize;
    let mut max_err = 0.0f64;
    for k in 0..=steps {
        let t = (t_start + k as f64 * dt).min(t_end);
        let reference = spline.position(t);
        if !(state.0.iter().chain(state.1.iter()).all(|v| v.is_finite())) {
            return Err(SimulationError::NonFinite(t));
        }
        max_err = max_err.max((reference - state.0).norm());
        points.push(TracePoint { t, position: state.0, velocity: state.1, reference });
        if k == steps {
            break;
        }
        let h = (t_start + (k + 1) as f64 * dt).min(t_end) - t;
        if command(t, state).1 {
            saturated += 1;
        }
        state = rk4_step(&deriv, t, state, h);
    }
    Ok(ExecutedTrace { dt, points, max_tracking_error: max_err, saturation_fraction: saturated as f64 / steps as f64 })
}

fn rk4_step(f: &impl Fn(f64, State) -> State, t: f64, s: State, h: f64) -> State {
    let add = |s: State, k: State, c: f64| (s.0 + k.0 * c, s.1 + k.1 * c);
    let k1 = f(t, s);
    let k2 = f(t + h / 2.0, add(s, k1, h / 2.0));
    let k3 = f(t + h / 2.0, add(s, k2, h / 2.0));
    let k4 = f(t + h, add(s, k3, h));
    (
        s.0 + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0),
        s.1 + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0),
    )
}

/// Error bound for a controllable trace, as a fraction of `d_col`.
pub const MAX_ERROR_FRACTION: f64 = 0.5;
/// Largest admissible fraction of saturated steps.
pub const MAX_SATURATION_FRACTION: f64 = 0.2;

/// A trace is controllable when the tracking error stays within half the
/// collision threshold and the thrust budget saturates on at most a fifth of
/// the steps. Both bounds are inclusive.
pub fn label_controllability(trace: &ExecutedTrace, spec: &UavSpec) -> bool {
    trace.max_tracking_error <= MAX_ERROR_FRACTION * spec.d_col()
        && trace.saturation_fraction <= MAX_SATURATION_FRACTION
}

/// Minimum distance between two traces sampled on the same clock, refined
/// between samples with cubic Hermite interpolation of the relative motion.
pub fn executed_separation(a: &ExecutedTrace, b: &ExecutedTrace) -> Option<(f64, f64)> {
    let n = a.points.len().min(b.points.len());
    if n == 0 {
        return None;
    }
    let rel = |i: usize| (a.points[i].position - b.points[i].position, a.points[i].velocity - b.points[i].velocity);
    let (best_i, _) = (0..n).map(|i| (i, rel(i).0.norm())).min_by(|x, y| x.1.total_cmp(&y.1))?;
    let mut best = (rel(best_i).0.norm(), a.points[best_i].t);
    for i in [best_i.wrapping_sub(1), best_i] {
        if i + 1 >= n {
            continue;
        }
        let (t0, t1) = (a.points[i].t, a.points[i + 1].t);
        let h = t1 - t0;
        if h <= 0.0 {
            continue;
        }
        let ((p0, v0), (p1, v1)) = (rel(i), rel(i + 1));
        let at = |s: f64| {
            let (s2, s3) = (s * s, s * s * s);
            (p0 * (2.0 * s3 - 3.0 * s2 + 1.0)
                + v0 * (h * (s3 - 2.0 * s2 + s))
                + p1 * (-2.0 * s3 + 3.0 * s2)
                + v1 * (h * (s3 - s2)))
                .norm()
        };
        let s = golden_section(at, 0.0, 1.0, 60);
        let d = at(s);
        if d < best.0 {
            best = (d, t0 + s * h);
        }
    }
    Some(best)
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / 2.0
}
