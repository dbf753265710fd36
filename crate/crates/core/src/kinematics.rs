//! Closed-form collision prediction for two constant-velocity planar vehicles.
//!
//! Both states are referenced to time zero: a vehicle with state `(p, v)` is
//! at `p + v t` at time `t`.

use nalgebra::{Rotation2, Vector2};
use serde::{Deserialize, Serialize};

/// Planar vector in meters or meters per second.
pub type Vec2 = Vector2<f64>;

/// Default look-ahead horizon used when predicting a collision.
pub const DEFAULT_HORIZON: f64 = 30.0;

/// z-component of the 3D cross product of two planar vectors.
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Rotates `v` counter-clockwise by `angle` radians.
pub fn rotate(v: &Vec2, angle: f64) -> Vec2 {
    Rotation2::new(angle) * v
}

/// Position and velocity of one vehicle at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl UavState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn from_xy(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self::new(Vec2::new(px, py), Vec2::new(vx, vy))
    }

    /// Straight-line extrapolated position at time `t`.
    pub fn position_at(&self, t: f64) -> Vec2 {
        self.position + self.velocity * t
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn translated(&self, offset: Vec2) -> Self {
        Self::new(self.position + offset, self.velocity)
    }

    /// Rotates position and velocity about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        Self::new(rotate(&self.position, angle), rotate(&self.velocity, angle))
    }
}

/// Outcome of straight-line extrapolation over `[t_start, horizon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionPrediction {
    pub t_start: f64,
    pub t_min: f64,
    pub d_min: f64,
    pub t_col: Option<f64>,
    pub horizon: f64,
}

/// Separation `|(p_a + v_a t) - (p_b + v_b t)|`.
pub fn separation_at(a: &UavState, b: &UavState, t: f64) -> f64 {
    (a.position_at(t) - b.position_at(t)).norm()
}

/// Time of closest approach within `[t1, horizon)` and the separation there.
///
/// The returned prediction carries no collision time; see
/// [`predict_collision`] for the combined query.
pub fn closest_approach(a: &UavState, b: &UavState, t1: f64, horizon: f64) -> CollisionPrediction {
    debug_assert!(t1 < horizon);
    let dp = a.position - b.position;
    let dv = a.velocity - b.velocity;
    let dv2 = dv.norm_squared();
    let t_min = if dv2 == 0.0 { t1 } else { (-dp.dot(&dv) / dv2).clamp(t1, horizon) };
    CollisionPrediction { t_start: t1, t_min, d_min: separation_at(a, b, t_min), t_col: None, horizon }
}

/// Earliest time in `(t1, t_min]` at which the separation drops to `d_col`.
///
/// Solved as the smaller root of `|dp + dv t|^2 = d_col^2`. Returns `None`
/// when the vehicles never come within `d_col` inside the window.
pub fn collision_time(a: &UavState, b: &UavState, d_col: f64, t1: f64, horizon: f64) -> Option<f64> {
    debug_assert!(d_col > 0.0);
    let closest = closest_approach(a, b, t1, horizon);
    if closest.d_min > d_col {
        return None;
    }
    let dp = a.position - b.position;
    let dv = a.velocity - b.velocity;
    let qa = dv.norm_squared();
    if qa == 0.0 {
        return None;
    }
    let qb = 2.0 * dp.dot(&dv);
    let qc = dp.norm_squared() - d_col * d_col;
    let (lo, _) = stable_quadratic_roots(qa, qb, qc);
    (lo > t1 && lo <= closest.t_min).then_some(lo)
}

/// Closest approach plus collision time in one call.
pub fn predict_collision(a: &UavState, b: &UavState, d_col: f64, t1: f64, horizon: f64) -> CollisionPrediction {
    let mut prediction = closest_approach(a, b, t1, horizon);
    prediction.t_col = collision_time(a, b, d_col, t1, horizon);
    prediction
}

// Real roots of qa t^2 + qb t + qc (qa > 0), ascending. A slightly negative
// discriminant from rounding is treated as a double root.
fn stable_quadratic_roots(qa: f64, qb: f64, qc: f64) -> (f64, f64) {
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    if q == 0.0 {
        return (0.0, 0.0);
    }
    let r1 = q / qa;
    let r2 = qc / q;
    if r1 <= r2 {
        (r1, r2)
    } else {
        (r2, r1)
    }
}
