//! Encounter scenarios, the per-angle minimum detection range and its
//! worst case over a set of approach angles.

mod pso;

pub use pso::{pso_per_scenario, PsoConfig, PsoResult};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ClassifierSet, UavSpec};
use crate::kinematics::{predict_collision, UavState, Vec2};
use crate::maneuver::{decision_to_schedules, ManeuverDecision, Strategy, MAX_DELTA_V, MAX_PHI};
use crate::trajectory::{fit_min_snap, pairwise_min_distance, PolySpline};

/// Largest detection range considered, m.
pub const R_MAX: f64 = 200.0;
/// Range assigned to an angle with no safe detection range, `2 R_MAX`.
pub const INFEASIBLE_RANGE: f64 = 2.0 * R_MAX;
/// Look-ahead for collision prediction in scenario evaluation, s.
pub const SEARCH_HORIZON: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("approach angle {0} deg outside (0, 180]")]
    Angle(f64),
    #[error("detection range {0} m outside [d_col, {R_MAX}]")]
    Range(f64),
    #[error("speed {0} m/s must be positive")]
    Speed(f64),
}

/// Both vehicles on collision courses through the origin.
///
/// UAV A flies along +x; UAV B's course is rotated by `theta` from A's, so
/// `theta = 180` is head-on. Both are `L = r / (2 sin(theta / 2))` from the
/// origin, which puts them `r` apart and makes them arrive together.
pub fn build_scenario(theta_deg: f64, r: f64, speed: f64) -> Result<(UavState, UavState), SearchError> {
    if !(theta_deg > 0.0 && theta_deg <= 180.0) {
        return Err(SearchError::Angle(theta_deg));
    }
    if !(r.is_finite() && r > 0.0 && r <= R_MAX) {
        return Err(SearchError::Range(r));
    }
    if !(speed.is_finite() && speed > 0.0) {
        return Err(SearchError::Speed(speed));
    }
    let th = theta_deg.to_radians();
    let l = r / (2.0 * (th / 2.0).sin());
    let ub = if theta_deg == 180.0 { Vec2::new(-1.0, 0.0) } else { Vec2::new(th.cos(), th.sin()) };
    let a = UavState::new(Vec2::new(-l, 0.0), Vec2::new(speed, 0.0));
    let b = UavState::new(-ub * l, ub * speed);
    Ok((a, b))
}

/// Unscaled policy output before the two vehicles' answers are merged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawDecision {
    /// m/s
    pub delta_v: f64,
    /// rad
    pub phi: f64,
    /// Strategy selector; speed change when `s <= 0.5`.
    pub s: f64,
}

impl RawDecision {
    pub fn strategy(&self) -> Strategy {
        if self.s <= 0.5 {
            Strategy::SpeedChange
        } else {
            Strategy::DirectionChange
        }
    }

    fn mean(&self, other: &Self) -> Self {
        Self {
            delta_v: 0.5 * (self.delta_v + other.delta_v),
            phi: 0.5 * (self.phi + other.phi),
            s: 0.5 * (self.s + other.s),
        }
    }

    /// Bounded maneuver decision with the given reaction time.
    pub fn to_decision(&self, t2_offset: f64) -> Option<ManeuverDecision> {
        let dv = self.delta_v.clamp(0.0, MAX_DELTA_V);
        let phi = self.phi.clamp(0.0, MAX_PHI);
        if !(dv.is_finite() && phi.is_finite() && self.s.is_finite()) {
            return None;
        }
        ManeuverDecision::new(self.strategy(), dv, phi, t2_offset).ok()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("policy evaluation failed: {0}")]
pub struct PolicyError(pub String);

/// Anything that maps the ownship and intruder states to a maneuver.
pub trait ManeuverPolicy: Sync {
    fn raw_decision(&self, own: &UavState, other: &UavState) -> Result<RawDecision, PolicyError>;
}

/// Emits the same decision whatever the encounter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPolicy(pub RawDecision);

impl ConstantPolicy {
    pub fn direction_change(phi: f64) -> Self {
        Self(RawDecision { delta_v: 0.0, phi, s: 1.0 })
    }

    pub fn speed_change(delta_v: f64) -> Self {
        Self(RawDecision { delta_v, phi: 0.0, s: 0.0 })
    }
}

impl ManeuverPolicy for ConstantPolicy {
    fn raw_decision(&self, _: &UavState, _: &UavState) -> Result<RawDecision, PolicyError> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub spec: UavSpec,
    /// Delay from detection to maneuver start, s.
    pub t2_offset: f64,
    pub horizon: f64,
    /// Planned peak acceleration must stay below this fraction of the
    /// horizontal thrust budget.
    pub accel_margin: f64,
    /// Stop when `0 <= d_min - d_col < tolerance` or the bracket is narrower.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scan_points: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            spec: UavSpec::default(),
            t2_offset: 0.1,
            horizon: SEARCH_HORIZON,
            accel_margin: 0.9,
            tolerance: 0.01,
            max_iterations: 50,
            scan_points: 20,
        }
    }
}

/// Why an evaluation produced its separation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// The maneuver was planned and flown.
    Executed,
    /// No collision predicted; straight-line separation reported.
    NoConflict,
    /// The policy failed or produced a non-finite output.
    PolicyFailure,
    /// The maneuver would start at or after the predicted collision.
    TooLate,
    /// The failure classifier predicts the controller cannot follow it.
    Uncontrollable,
    /// The planned trajectory needs more acceleration than available.
    ThrustLimited,
    /// Planning or spline fitting failed.
    PlanningFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub d_min: f64,
    pub verdict: Verdict,
    pub decision: Option<ManeuverDecision>,
}

impl Outcome {
    fn unsafe_with(verdict: Verdict, decision: Option<ManeuverDecision>) -> Self {
        Self { d_min: 0.0, verdict, decision }
    }
}

/// Maneuver that passed every gate, with both fitted trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub decision: ManeuverDecision,
    pub a: PolySpline,
    pub b: PolySpline,
}

/// Runs the online planning pipeline on constructed scenarios.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    pub config: EvaluationConfig,
    pub classifiers: Option<Arc<ClassifierSet>>,
}

/// Regula Falsi outcome for one approach angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeResult {
    pub theta: f64,
    pub r_star: f64,
    pub feasible: bool,
    /// Separation achieved at `r_star` (at `R_MAX` when infeasible).
    pub d_min: f64,
    pub decision: Option<ManeuverDecision>,
    pub evaluations: usize,
}

/// Per-angle ranges and their worst case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub per_angle: Vec<RangeResult>,
    pub r_min: f64,
}

impl FitnessRecord {
    pub fn all_feasible(&self) -> bool {
        self.per_angle.iter().all(|r| r.feasible)
    }
}

impl Evaluator {
    pub fn new(config: EvaluationConfig, classifiers: Option<Arc<ClassifierSet>>) -> Self {
        Self { config, classifiers }
    }

    pub fn d_col(&self) -> f64 {
        self.config.spec.d_col()
    }

    /// Minimum separation of the reciprocal maneuver in the scenario
    /// `(theta, r)` flown at cruise speed.
    pub fn evaluate(&self, policy: &dyn ManeuverPolicy, theta: f64, r: f64) -> Result<Outcome, SearchError> {
        let (a, b) = build_scenario(theta, r, self.config.spec.cruise_speed)?;
        Ok(self.evaluate_states(policy, &a, &b))
    }

    /// Pipeline on explicit states: predict, decide from both frames, gate,
    /// plan, fit and measure.
    pub fn evaluate_states(&self, policy: &dyn ManeuverPolicy, a: &UavState, b: &UavState) -> Outcome {
        let plan = match self.plan_states(policy, a, b) {
            Ok(plan) => plan,
            Err(outcome) => return outcome,
        };
        match pairwise_min_distance(&plan.a, &plan.b) {
            Ok(sep) => Outcome { d_min: sep.d_min, verdict: Verdict::Executed, decision: Some(plan.decision) },
            Err(_) => Outcome::unsafe_with(Verdict::PlanningFailure, Some(plan.decision)),
        }
    }

    /// Fitted trajectories of an executable maneuver, or the outcome that
    /// stopped the pipeline before fitting succeeded.
    pub fn plan_states(&self, policy: &dyn ManeuverPolicy, a: &UavState, b: &UavState) -> Result<Plan, Outcome> {
        let cfg = &self.config;
        let prediction = predict_collision(a, b, self.d_col(), 0.0, cfg.horizon);
        let Some(t_col) = prediction.t_col else {
            return Err(Outcome { d_min: prediction.d_min, verdict: Verdict::NoConflict, decision: None });
        };
        let raw = match (policy.raw_decision(a, b), policy.raw_decision(b, a)) {
            (Ok(x), Ok(y)) => x.mean(&y),
            _ => return Err(Outcome::unsafe_with(Verdict::PolicyFailure, None)),
        };
        let Some(decision) = raw.to_decision(cfg.t2_offset) else {
            return Err(Outcome::unsafe_with(Verdict::PolicyFailure, None));
        };
        if prediction.t_start + decision.t2_offset >= t_col {
            return Err(Outcome::unsafe_with(Verdict::TooLate, Some(decision)));
        }
        if let Some(c) = &self.classifiers {
            if !(c.allows(&decision, a.speed()) && c.allows(&decision, b.speed())) {
                return Err(Outcome::unsafe_with(Verdict::Uncontrollable, Some(decision)));
            }
        }
        let fitted = decision_to_schedules(&decision, a, b, &prediction)
            .ok()
            .and_then(|(sa, sb)| Some((fit_min_snap(&sa).ok()?, fit_min_snap(&sb).ok()?)));
        let Some((fa, fb)) = fitted else {
            return Err(Outcome::unsafe_with(Verdict::PlanningFailure, Some(decision)));
        };
        let limit = cfg.accel_margin * cfg.spec.max_horizontal_accel();
        if fa.peak_acceleration() > limit || fb.peak_acceleration() > limit {
            return Err(Outcome::unsafe_with(Verdict::ThrustLimited, Some(decision)));
        }
        Ok(Plan { decision, a: fa, b: fb })
    }

    fn separation(&self, policy: &dyn ManeuverPolicy, theta: f64, r: f64) -> Outcome {
        self.evaluate(policy, theta, r).unwrap_or_else(|_| Outcome::unsafe_with(Verdict::PlanningFailure, None))
    }

    /// Smallest detection range in `[d_col, R_MAX]` whose maneuver keeps the
    /// separation at or above `d_col`; see [`min_safe_range`].
    pub fn regula_falsi_range(&self, policy: &dyn ManeuverPolicy, theta: f64) -> RangeResult {
        let cfg = &self.config;
        let d_col = self.d_col();
        let mut evaluations = 0usize;
        let g = |r: f64| {
            evaluations += 1;
            let o = self.separation(policy, theta, r);
            (o.d_min - d_col, o)
        };
        let solved = min_safe_range(g, d_col, R_MAX, cfg.tolerance, cfg.max_iterations, cfg.scan_points);
        match solved {
            SafeRange::Found { r, extra: o, .. } => {
                RangeResult { theta, r_star: r, feasible: true, d_min: o.d_min, decision: o.decision, evaluations }
            }
            SafeRange::Infeasible { extra: o, .. } => RangeResult {
                theta,
                r_star: INFEASIBLE_RANGE,
                feasible: false,
                d_min: o.d_min,
                decision: o.decision,
                evaluations,
            },
        }
    }

    /// Per-angle ranges evaluated concurrently and their maximum.
    pub fn worst_case_range(&self, policy: &dyn ManeuverPolicy, angles: &[f64]) -> FitnessRecord {
        let per_angle: Vec<RangeResult> = angles.par_iter().map(|&th| self.regula_falsi_range(policy, th)).collect();
        let r_min = per_angle.iter().map(|r| r.r_star).fold(f64::NEG_INFINITY, f64::max);
        FitnessRecord { per_angle, r_min }
    }
}

/// Result of [`min_safe_range`]; `extra` is the payload returned by `g`
/// at the reported point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafeRange<T> {
    Found {
        r: f64,
        g: f64,
        extra: T,
    },
    /// `g(hi) < 0`.
    Infeasible {
        g: f64,
        extra: T,
    },
}

/// Smallest `r` in `[lo, hi]` with `g(r) >= 0`.
///
/// Endpoints are checked first: `g(hi) < 0` is infeasible and `g(lo) >= 0`
/// returns `lo`. Otherwise `scan_points` uniform ranges locate the first safe
/// grid point and Illinois-modified false position, falling back to
/// bisection when the bracket shrinks slowly, refines the bracket below it.
/// Stops once `0 <= g < tol` or the bracket is narrower than `tol`, and
/// always returns the safe end of the bracket.
pub fn min_safe_range<T>(
    mut g: impl FnMut(f64) -> (f64, T),
    lo: f64,
    hi: f64,
    tol: f64,
    max_iterations: usize,
    scan_points: usize,
) -> SafeRange<T> {
    let (g_hi, x_hi) = g(hi);
    if !(g_hi >= 0.0) {
        return SafeRange::Infeasible { g: g_hi, extra: x_hi };
    }
    let (g_lo, x_lo) = g(lo);
    if g_lo >= 0.0 {
        return SafeRange::Found { r: lo, g: g_lo, extra: x_lo };
    }

    let n = scan_points.max(2);
    let (mut a, mut ga) = (lo, g_lo);
    let (mut b, mut gb, mut xb) = (hi, g_hi, x_hi);
    for i in 1..n - 1 {
        let r = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let (gr, xr) = g(r);
        if gr >= 0.0 {
            (b, gb, xb) = (r, gr, xr);
            break;
        }
        (a, ga) = (r, gr);
    }

    let mut side = 0i8;
    let mut slow_steps = 0;
    for _ in 0..max_iterations {
        if gb < tol || b - a < tol {
            break;
        }
        let width = b - a;
        let mut c = b - gb * (b - a) / (gb - ga);
        if slow_steps >= 2 || !(c > a && c < b) {
            c = 0.5 * (a + b);
            slow_steps = 0;
        }
        let (gc, xc) = g(c);
        if gc >= 0.0 {
            (b, gb, xb) = (c, gc, xc);
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        } else {
            (a, ga) = (c, gc);
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        }
        slow_steps = if b - a > 0.5 * width { slow_steps + 1 } else { 0 };
    }
    SafeRange::Found { r: b, g: gb, extra: xb }
}

/// `{5, 10, ..., 180}` degrees.
pub fn training_angles() -> Vec<f64> {
    (1..=36).map(|i| 5.0 * i as f64).collect()
}

/// `{1, 2, ..., 180}` degrees.
pub fn test_angles() -> Vec<f64> {
    (1..=180).map(f64::from).collect()
}
