//! Waypoint schedules for the speed-change and direction-change strategies.
//!
//! Every maneuver uses five time points: `t1` (decision), `t2` (maneuver
//! start), `t3 = t_col` (symmetry point), `t4 = 2 t3 - t2` (back on the
//! nominal path) and `t5 = t4 + (t3 - t2)` (end of the recovery segment).
//! Between knots each vehicle moves with a constant average velocity, so the
//! waypoints are exact integrals of those averages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{cross, rotate, CollisionPrediction, UavState, Vec2};

/// Largest admissible speed change in m/s.
pub const MAX_DELTA_V: f64 = 5.0;
/// Largest admissible heading deviation, 30 degrees in radians.
pub const MAX_PHI: f64 = std::f64::consts::PI / 6.0;
/// Latest admissible maneuver start after detection, in seconds.
pub const MAX_T2_OFFSET: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManeuverError {
    #[error("maneuver start t2={t2} is not before the predicted collision t_col={t_col}")]
    StartNotBeforeCollision { t2: f64, t_col: f64 },
    #[error("maneuver start t2={t2} is not after the decision time t1={t1}")]
    StartNotAfterDecision { t1: f64, t2: f64 },
    #[error("deviation angle {0} rad is at or beyond 90 degrees")]
    SingularAngle(f64),
    #[error("no collision predicted; nothing to plan")]
    NoCollision,
    #[error("decision parameter out of bounds: {0}")]
    OutOfBounds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    SpeedChange,
    DirectionChange,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::SpeedChange => "SC",
            Strategy::DirectionChange => "DC",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "SC" => Some(Strategy::SpeedChange),
            "DC" => Some(Strategy::DirectionChange),
            _ => None,
        }
    }
}

/// One shared reciprocal decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverDecision {
    pub strategy: Strategy,
    /// Speed change in m/s, used by [`Strategy::SpeedChange`].
    pub delta_v: f64,
    /// Heading deviation in radians, used by [`Strategy::DirectionChange`].
    pub phi: f64,
    /// Delay between decision and maneuver start.
    pub t2_offset: f64,
}

impl ManeuverDecision {
    pub fn new(strategy: Strategy, delta_v: f64, phi: f64, t2_offset: f64) -> Result<Self, ManeuverError> {
        if !(0.0..=MAX_DELTA_V).contains(&delta_v) {
            return Err(ManeuverError::OutOfBounds(format!("delta_v={delta_v}")));
        }
        if !(0.0..=MAX_PHI).contains(&phi) {
            return Err(ManeuverError::OutOfBounds(format!("phi={phi}")));
        }
        if !(t2_offset > 0.0 && t2_offset <= MAX_T2_OFFSET) {
            return Err(ManeuverError::OutOfBounds(format!("t2_offset={t2_offset}")));
        }
        Ok(Self { strategy, delta_v, phi, t2_offset })
    }

    /// The strategy's own parameter: `delta_v` for SC, `phi` for DC.
    pub fn parameter(&self) -> f64 {
        match self.strategy {
            Strategy::SpeedChange => self.delta_v,
            Strategy::DirectionChange => self.phi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub position: Vec2,
    pub velocity: Vec2,
}

/// Five time-stamped waypoints of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointSchedule {
    pub waypoints: [Waypoint; 5],
}

impl WaypointSchedule {
    pub fn times(&self) -> [f64; 5] {
        self.waypoints.map(|w| w.t)
    }

    /// Unperturbed straight-line schedule sampled at `times`.
    pub fn straight(state: &UavState, times: [f64; 5]) -> Self {
        Self { waypoints: times.map(|t| Waypoint { t, position: state.position_at(t), velocity: state.velocity }) }
    }

    pub fn translated(&self, offset: Vec2) -> Self {
        Self { waypoints: self.waypoints.map(|w| Waypoint { position: w.position + offset, ..w }) }
    }
}

/// Knot times `t1..t5` from decision time, start and collision time.
pub fn knot_times(t1: f64, t2: f64, t_col: f64) -> Result<[f64; 5], ManeuverError> {
    if t2 <= t1 {
        return Err(ManeuverError::StartNotAfterDecision { t1, t2 });
    }
    if t2 >= t_col {
        return Err(ManeuverError::StartNotBeforeCollision { t2, t_col });
    }
    let half = t_col - t2;
    Ok([t1, t2, t_col, t_col + half, t_col + 2.0 * half])
}

// Integrates piecewise-constant average velocities through the knots.
fn integrate_schedule(state: &UavState, times: [f64; 5], v23: Vec2, v34: Vec2) -> WaypointSchedule {
    let v1 = state.velocity;
    let seg = [v1, v23, v34, v1];
    let mut positions = [state.position_at(times[0]); 5];
    for i in 0..4 {
        positions[i + 1] = positions[i] + seg[i] * (times[i + 1] - times[i]);
    }
    let velocities = [v1, (v1 + v23) * 0.5, (v23 + v34) * 0.5, (v34 + v1) * 0.5, v1];
    let mut waypoints = [Waypoint { t: 0.0, position: Vec2::zeros(), velocity: Vec2::zeros() }; 5];
    for i in 0..5 {
        waypoints[i] = Waypoint { t: times[i], position: positions[i], velocity: velocities[i] };
    }
    WaypointSchedule { waypoints }
}

/// True when `a` takes the accelerate role in a speed change against `b`.
///
/// The slower vehicle accelerates. At equal speeds the vehicle that sees the
/// other further to its left accelerates; a collinear tie falls back to the
/// lexicographic order of positions. The rule is antisymmetric, so both
/// vehicles reach complementary roles without communicating.
pub fn takes_accelerate_role(a: &UavState, b: &UavState) -> bool {
    let (sa, sb) = (a.speed(), b.speed());
    let scale = sa.max(sb).max(1.0);
    if (sa - sb).abs() > 1e-9 * scale {
        return sa < sb;
    }
    let ca = cross(&a.velocity, &(b.position - a.position));
    let cb = cross(&b.velocity, &(a.position - b.position));
    let tol = 1e-9 * (a.position - b.position).norm().max(1.0) * scale;
    if (ca - cb).abs() > tol {
        return ca > cb;
    }
    (a.position.x, a.position.y) < (b.position.x, b.position.y)
}

/// Speed-change schedules: the faster vehicle slows by `delta_v` until
/// `t_col` and then speeds up by the same amount, the slower one does the
/// reverse. Headings never change, and the displacement over `[t2, t4]`
/// equals the nominal one.
pub fn plan_speed_change(
    a: &UavState,
    b: &UavState,
    t1: f64,
    t2: f64,
    t_col: f64,
    delta_v: f64,
) -> Result<(WaypointSchedule, WaypointSchedule), ManeuverError> {
    let times = knot_times(t1, t2, t_col)?;
    let a_accel = takes_accelerate_role(a, b);
    let plan = |s: &UavState, accelerate: bool| {
        let speed = s.speed();
        let dir = if speed > 0.0 { s.velocity / speed } else { Vec2::zeros() };
        let signed = if accelerate { delta_v } else { -delta_v };
        let v23 = dir * (speed + signed);
        // (V1 (t4 - t2) - V23 (t3 - t2)) / (t4 - t3) with t4 - t3 = t3 - t2
        let v34 = s.velocity * 2.0 - v23;
        integrate_schedule(s, times, v23, v34)
    };
    Ok((plan(a, a_accel), plan(b, !a_accel)))
}

/// Direction-change schedules: both vehicles turn left by `phi` with the
/// average speed scaled by `1 / cos(phi)`, then mirror back onto the nominal
/// path by `t4`.
pub fn plan_direction_change(
    a: &UavState,
    b: &UavState,
    t1: f64,
    t2: f64,
    t_col: f64,
    phi: f64,
) -> Result<(WaypointSchedule, WaypointSchedule), ManeuverError> {
    if phi.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(ManeuverError::SingularAngle(phi));
    }
    let times = knot_times(t1, t2, t_col)?;
    let plan = |s: &UavState| {
        let gain = 1.0 / phi.cos();
        let v23 = rotate(&s.velocity, phi) * gain;
        let v34 = rotate(&s.velocity, -phi) * gain;
        integrate_schedule(s, times, v23, v34)
    };
    Ok((plan(a), plan(b)))
}

/// Applies one shared decision reciprocally to both vehicles.
pub fn decision_to_schedules(
    decision: &ManeuverDecision,
    a: &UavState,
    b: &UavState,
    prediction: &CollisionPrediction,
) -> Result<(WaypointSchedule, WaypointSchedule), ManeuverError> {
    let t_col = prediction.t_col.ok_or(ManeuverError::NoCollision)?;
    let t1 = prediction.t_start;
    let t2 = t1 + decision.t2_offset;
    match decision.strategy {
        Strategy::SpeedChange => plan_speed_change(a, b, t1, t2, t_col, decision.delta_v),
        Strategy::DirectionChange => plan_direction_change(a, b, t1, t2, t_col, decision.phi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::predict_collision;
    use proptest::prelude::{prop_assert, proptest};

    const V: f64 = 16.67;

    fn head_on() -> (UavState, UavState) {
        (UavState::from_xy(-50.0, 0.0, V, 0.0), UavState::from_xy(50.0, 0.0, -V, 0.0))
    }

    fn crossing(theta_deg: f64) -> (UavState, UavState) {
        let th = theta_deg.to_radians();
        let ub = Vec2::new(th.cos(), th.sin());
        let l = 80.0;
        (UavState::new(Vec2::new(-l, 0.0), Vec2::new(V, 0.0)), UavState::new(-ub * l, ub * V))
    }

    fn assert_schedule_close(x: &WaypointSchedule, y: &WaypointSchedule, tol: f64) {
        for (p, q) in x.waypoints.iter().zip(&y.waypoints) {
            assert!((p.t - q.t).abs() < tol);
            assert!((p.position - q.position).norm() < tol, "{p:?} vs {q:?}");
            assert!((p.velocity - q.velocity).norm() < tol, "{p:?} vs {q:?}");
        }
    }

    #[test]
    fn null_speed_change_is_straight() {
        let (a, b) = crossing(70.0);
        let (sa, sb) = plan_speed_change(&a, &b, 0.0, 0.1, 4.0, 0.0).unwrap();
        assert_schedule_close(&sa, &WaypointSchedule::straight(&a, sa.times()), 1e-12);
        assert_schedule_close(&sb, &WaypointSchedule::straight(&b, sb.times()), 1e-12);
    }

    #[test]
    fn speed_change_segment_speeds() {
        let (a, b) = crossing(120.0);
        let (sa, sb) = plan_speed_change(&a, &b, 0.0, 0.1, 3.0, 2.0).unwrap();
        let seg_speed = |s: &WaypointSchedule| {
            let w = &s.waypoints;
            (w[2].position - w[1].position).norm() / (w[2].t - w[1].t)
        };
        // b sees a on its left in this construction, so b accelerates
        assert!(takes_accelerate_role(&b, &a));
        assert!((seg_speed(&sa) - 14.67).abs() < 1e-9);
        assert!((seg_speed(&sb) - 18.67).abs() < 1e-9);
    }

    #[test]
    fn faster_vehicle_decelerates() {
        let a = UavState::from_xy(-50.0, 0.0, 20.0, 0.0);
        let b = UavState::from_xy(0.0, -40.0, 0.0, 16.0);
        assert!(!takes_accelerate_role(&a, &b));
        assert!(takes_accelerate_role(&b, &a));
    }

    #[test]
    fn direction_change_speed_and_offset() {
        let (a, b) = head_on();
        let phi = 30f64.to_radians();
        let (sa, _) = plan_direction_change(&a, &b, 0.0, 0.1, 2.9568, phi).unwrap();
        let w = &sa.waypoints;
        let speed = (w[2].position - w[1].position).norm() / (w[2].t - w[1].t);
        assert!((speed - V / phi.cos()).abs() < 1e-9);
        assert!((speed - 19.25).abs() < 5e-3);
        // apex offset from the nominal x-axis path
        let expected = V * phi.tan() * (w[2].t - w[1].t);
        assert!((w[2].position.y - expected).abs() < 1e-9);
        assert!(w[2].position.y > 0.0, "A deviates to its left (+y)");
    }

    #[test]
    fn rejects_late_start_and_singular_angle() {
        let (a, b) = head_on();
        assert!(matches!(
            plan_speed_change(&a, &b, 0.0, 3.0, 2.9, 1.0),
            Err(ManeuverError::StartNotBeforeCollision { .. })
        ));
        assert!(matches!(
            plan_direction_change(&a, &b, 0.0, 0.1, 2.9, std::f64::consts::FRAC_PI_2),
            Err(ManeuverError::SingularAngle(_))
        ));
    }

    #[test]
    fn decision_bounds_are_enforced() {
        assert!(ManeuverDecision::new(Strategy::SpeedChange, 5.1, 0.0, 0.1).is_err());
        assert!(ManeuverDecision::new(Strategy::DirectionChange, 0.0, 0.6, 0.1).is_err());
        assert!(ManeuverDecision::new(Strategy::DirectionChange, 0.0, 0.5, 3.5).is_err());
        assert!(ManeuverDecision::new(Strategy::DirectionChange, 0.0, 0.5, 0.0).is_err());
        assert!(ManeuverDecision::new(Strategy::DirectionChange, 5.0, MAX_PHI, 3.0).is_ok());
    }

    #[test]
    fn null_decisions_agree_and_timing_is_symmetric() {
        let (a, b) = crossing(45.0);
        let pred = predict_collision(&a, &b, 1.42, 0.0, 100.0);
        let sc = ManeuverDecision::new(Strategy::SpeedChange, 0.0, 0.0, 0.1).unwrap();
        let dc = ManeuverDecision::new(Strategy::DirectionChange, 0.0, 0.0, 0.1).unwrap();
        let (sa, sb) = decision_to_schedules(&sc, &a, &b, &pred).unwrap();
        let (da, db) = decision_to_schedules(&dc, &a, &b, &pred).unwrap();
        assert_schedule_close(&sa, &da, 1e-12);
        assert_schedule_close(&sb, &db, 1e-12);
        let t = sa.times();
        assert!(((t[3] - t[2]) - (t[2] - t[1])).abs() < 1e-12);
        assert!(((t[4] - t[3]) - (t[2] - t[1])).abs() < 1e-12);
        assert_eq!(t[2], pred.t_col.unwrap());
    }

    #[test]
    fn head_on_direction_change_is_point_symmetric() {
        let (a, b) = head_on();
        let pred = predict_collision(&a, &b, 1.42, 0.0, 30.0);
        let dc = ManeuverDecision::new(Strategy::DirectionChange, 0.0, 20f64.to_radians(), 0.1).unwrap();
        let (sa, sb) = decision_to_schedules(&dc, &a, &b, &pred).unwrap();
        for (p, q) in sa.waypoints.iter().zip(&sb.waypoints) {
            assert!((p.position + q.position).norm() < 1e-9);
            assert!((p.velocity + q.velocity).norm() < 1e-9);
        }
        assert!(sa.waypoints[2].position.y > 0.0);
        assert!(sb.waypoints[2].position.y < 0.0);
    }

    fn check_nominal_ends(s: &UavState, sched: &WaypointSchedule) {
        for i in [0, 3, 4] {
            let w = &sched.waypoints[i];
            assert!((w.position - s.position_at(w.t)).norm() < 1e-9, "knot {i}: {w:?}");
        }
        assert!((sched.waypoints[0].velocity - s.velocity).norm() < 1e-12);
        assert!((sched.waypoints[4].velocity - s.velocity).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn maneuvers_return_to_nominal_path(
            theta in 5.0f64..180.0,
            dv in 0.0..MAX_DELTA_V,
            phi in 0.0..MAX_PHI,
            t_col in 0.5f64..20.0,
        ) {
            let (a, b) = crossing(theta);
            let (sa, sb) = plan_speed_change(&a, &b, 0.0, 0.1, t_col, dv).unwrap();
            check_nominal_ends(&a, &sa);
            check_nominal_ends(&b, &sb);
            for (s, sched) in [(&a, &sa), (&b, &sb)] {
                for w in &sched.waypoints {
                    prop_assert!(cross(&s.velocity, &w.velocity).abs() < 1e-9);
                    prop_assert!(s.velocity.dot(&w.velocity) > 0.0);
                }
            }
            let (da, db) = plan_direction_change(&a, &b, 0.0, 0.1, t_col, phi).unwrap();
            check_nominal_ends(&a, &da);
            check_nominal_ends(&b, &db);
            for d in [&da, &db] {
                let w = &d.waypoints;
                let s1 = (w[2].position - w[1].position).norm() / (w[2].t - w[1].t);
                let s2 = (w[3].position - w[2].position).norm() / (w[3].t - w[2].t);
                prop_assert!((s1 - s2).abs() < 1e-9);
            }
        }

        #[test]
        fn swapping_labels_gives_same_pair(theta in 5.0f64..180.0, dv in 0.0..MAX_DELTA_V, phi in 0.0..MAX_PHI) {
            let (a, b) = crossing(theta);
            let (sa, sb) = plan_speed_change(&a, &b, 0.0, 0.1, 3.0, dv).unwrap();
            let (tb, ta) = plan_speed_change(&b, &a, 0.0, 0.1, 3.0, dv).unwrap();
            assert_schedule_close(&sa, &ta, 1e-12);
            assert_schedule_close(&sb, &tb, 1e-12);
            let (sa, sb) = plan_direction_change(&a, &b, 0.0, 0.1, 3.0, phi).unwrap();
            let (tb, ta) = plan_direction_change(&b, &a, 0.0, 0.1, 3.0, phi).unwrap();
            assert_schedule_close(&sa, &ta, 1e-12);
            assert_schedule_close(&sb, &tb, 1e-12);
        }
    }
}
