//! Minimum-snap septic splines through maneuver waypoints, and the exact
//! minimum separation between two such splines.
//!
//! Each segment is stored as a degree-7 polynomial in normalized time
//! `tau = (t - t_i) / T_i` on `[0, 1]`. The fit is parameterized by the
//! velocity, acceleration and jerk at every knot (positions are pinned), which
//! makes position through jerk continuous by construction. Minimizing the
//! integrated squared snap over the free knot derivatives is then an
//! unconstrained quadratic problem; its stationarity conditions also make
//! snap continuous at interior knots.

mod poly;
mod separation;

pub use poly::Poly;
pub use separation::{executed_min_distance, pairwise_min_distance, SeparationResult};

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::LazyLock;
use thiserror::Error;

use crate::kinematics::Vec2;
use crate::maneuver::WaypointSchedule;

pub const SEGMENTS: usize = 4;
pub const KNOTS: usize = SEGMENTS + 1;
pub const COEFFS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("knot times must be strictly increasing and finite: {0:?}")]
    NonIncreasingKnots([f64; KNOTS]),
    #[error("minimum-snap system is singular")]
    Singular,
    #[error("splines have different knot times")]
    KnotMismatch,
}

type Mat8 = SMatrix<f64, 8, 8>;

// Maps tau-coefficients to [x, x', x'', x'''] at tau = 0 followed by tau = 1.
fn hermite_matrix() -> Mat8 {
    let mut m = Mat8::zeros();
    for d in 0..4 {
        m[(d, d)] = falling(d, d);
        for n in d..COEFFS {
            m[(4 + d, n)] = falling(n, d);
        }
    }
    m
}

// n! / (n - k)!
fn falling(n: usize, k: usize) -> f64 {
    ((n - k + 1)..=n).fold(1.0, |acc, i| acc * i as f64)
}

// Gram matrix of the 4th derivative on [0, 1] in the tau-monomial basis.
fn snap_gram() -> Mat8 {
    let mut q = Mat8::zeros();
    for i in 4..COEFFS {
        for j in 4..COEFFS {
            q[(i, j)] = falling(i, 4) * falling(j, 4) / (i + j - 7) as f64;
        }
    }
    q
}

struct Basis {
    hermite_inv: Mat8,
    gram: Mat8,
    // rank-4 square root of the snap cost as a quadratic form of the
    // tau-derivative boundary vector
    cost_factor: SMatrix<f64, 4, 8>,
}

static BASIS: LazyLock<Basis> = LazyLock::new(|| {
    let hermite_inv = hermite_matrix().try_inverse().expect("Hermite basis is invertible");
    let gram = snap_gram();
    // gram = G^T G with G = diag(n!/(n-4)!) restricted to degrees 4..7 times
    // the Cholesky factor of the Hilbert-like block
    let block = gram.fixed_view::<4, 4>(4, 4).into_owned();
    let chol = block.cholesky().expect("snap Gram block is positive definite");
    let upper = chol.l().transpose();
    let mut g = SMatrix::<f64, 4, 8>::zeros();
    g.fixed_view_mut::<4, 4>(0, 4).copy_from(&upper);
    let cost_factor = g * hermite_inv;
    Basis { hermite_inv, gram, cost_factor }
});

/// One polynomial piece of a [`PolySpline`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineSegment {
    pub t0: f64,
    pub duration: f64,
    pub x: [f64; COEFFS],
    pub y: [f64; COEFFS],
}

impl SplineSegment {
    pub fn tau(&self, t: f64) -> f64 {
        (t - self.t0) / self.duration
    }

    /// `order`-th time derivative at normalized time `tau`.
    pub fn derivative_at_tau(&self, tau: f64, order: usize) -> Vec2 {
        let scale = self.duration.powi(order as i32);
        Vec2::new(poly_derivative(&self.x, tau, order), poly_derivative(&self.y, tau, order)) / scale
    }

    pub fn axis_poly(&self, axis: usize) -> Poly {
        Poly::new(if axis == 0 { self.x.to_vec() } else { self.y.to_vec() })
    }
}

fn poly_derivative(c: &[f64; COEFFS], tau: f64, order: usize) -> f64 {
    let mut acc = 0.0;
    for n in (order..COEFFS).rev() {
        acc = acc * tau + c[n] * falling(n, order);
    }
    acc
}

/// Piecewise septic trajectory over four segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySpline {
    pub segments: [SplineSegment; SEGMENTS],
}

impl PolySpline {
    pub fn knots(&self) -> [f64; KNOTS] {
        let mut k = [0.0; KNOTS];
        for (i, s) in self.segments.iter().enumerate() {
            k[i] = s.t0;
        }
        let last = &self.segments[SEGMENTS - 1];
        k[SEGMENTS] = last.t0 + last.duration;
        k
    }

    pub fn start_time(&self) -> f64 {
        self.segments[0].t0
    }

    pub fn end_time(&self) -> f64 {
        self.knots()[SEGMENTS]
    }

    fn locate(&self, t: f64) -> &SplineSegment {
        let idx = self.segments.iter().rposition(|s| t >= s.t0).unwrap_or(0);
        &self.segments[idx]
    }

    /// `order`-th derivative at time `t`; clamped to the spline's time span.
    pub fn derivative(&self, t: f64, order: usize) -> Vec2 {
        let t = t.clamp(self.start_time(), self.end_time());
        let seg = self.locate(t);
        seg.derivative_at_tau(seg.tau(t), order)
    }

    pub fn position(&self, t: f64) -> Vec2 {
        self.derivative(t, 0)
    }

    pub fn velocity(&self, t: f64) -> Vec2 {
        self.derivative(t, 1)
    }

    pub fn acceleration(&self, t: f64) -> Vec2 {
        self.derivative(t, 2)
    }

    /// Integrated squared snap over the whole spline, summed over both axes.
    pub fn snap_cost(&self) -> f64 {
        let gram = &BASIS.gram;
        self.segments
            .iter()
            .map(|s| {
                let x = nalgebra::SVector::<f64, 8>::from_row_slice(&s.x);
                let y = nalgebra::SVector::<f64, 8>::from_row_slice(&s.y);
                ((x.transpose() * gram * x)[0] + (y.transpose() * gram * y)[0]) / s.duration.powi(7)
            })
            .sum()
    }

    /// Largest commanded acceleration magnitude over the spline.
    pub fn peak_acceleration(&self) -> f64 {
        let mut peak = 0.0f64;
        for s in &self.segments {
            let ax = s.axis_poly(0).derivative().derivative();
            let ay = s.axis_poly(1).derivative().derivative();
            let mag2 = &(&ax * &ax) + &(&ay * &ay);
            let mut candidates = vec![0.0, 1.0];
            candidates.extend(mag2.derivative().real_roots_in(0.0, 1.0, 1e-6));
            for tau in candidates {
                peak = peak.max(mag2.eval(tau).max(0.0).sqrt() / (s.duration * s.duration));
            }
        }
        peak
    }

    /// Text dump: one line per segment per axis with the eight normalized-time
    /// coefficients in ascending order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            for c in [&s.x, &s.y] {
                let line: Vec<String> = c.iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        out
    }
}

/// Fits the minimum-snap spline through a five-waypoint schedule.
///
/// Positions are interpolated at every knot and the velocity is clamped at
/// the first and last knot; accelerations and jerks at the ends are free.
pub fn fit_min_snap(schedule: &WaypointSchedule) -> Result<PolySpline, TrajectoryError> {
    let times = schedule.times();
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TrajectoryError::NonIncreasingKnots(times));
    }
    let durations: [f64; SEGMENTS] = std::array::from_fn(|i| times[i + 1] - times[i]);
    let rows = assemble_cost_rows(&durations);

    let mut coeffs = [[[0.0; COEFFS]; 2]; SEGMENTS];
    for axis in 0..2 {
        let pick = |v: &Vec2| if axis == 0 { v.x } else { v.y };
        let origin = pick(&schedule.waypoints[0].position);
        let mut state = [0.0; 4 * KNOTS];
        for (k, w) in schedule.waypoints.iter().enumerate() {
            state[4 * k] = pick(&w.position) - origin;
        }
        state[1] = pick(&schedule.waypoints[0].velocity);
        state[4 * (KNOTS - 1) + 1] = pick(&schedule.waypoints[KNOTS - 1].velocity);
        solve_free_derivatives(&rows, &mut state)?;
        for (i, &t) in durations.iter().enumerate() {
            let scale = [1.0, t, t * t, t * t * t];
            let mut b = nalgebra::SVector::<f64, 8>::zeros();
            for d in 0..4 {
                b[d] = state[4 * i + d] * scale[d];
                b[4 + d] = state[4 * (i + 1) + d] * scale[d];
            }
            let c = BASIS.hermite_inv * b;
            let out = &mut coeffs[i][axis];
            out.copy_from_slice(c.as_slice());
            out[0] += origin;
        }
    }

    Ok(PolySpline {
        segments: std::array::from_fn(|i| SplineSegment {
            t0: times[i],
            duration: durations[i],
            x: coeffs[i][0],
            y: coeffs[i][1],
        }),
    })
}

// Square-root form of the snap cost: each segment contributes four rows
// `T^-3.5 L D_T y` with `L^T L` the boundary cost matrix, so the total cost
// is the squared norm of the stacked rows over the 20 knot derivatives
// (position, velocity, acceleration, jerk per knot).
fn assemble_cost_rows(durations: &[f64; SEGMENTS]) -> DMatrix<f64> {
    let n = 4 * KNOTS;
    let factor = &BASIS.cost_factor;
    let mut rows = DMatrix::<f64>::zeros(4 * SEGMENTS, n);
    for (i, &t) in durations.iter().enumerate() {
        let scale = [1.0, t, t * t, t * t * t, 1.0, t, t * t, t * t * t];
        let w = t.powf(-3.5);
        for r in 0..4 {
            for c in 0..8 {
                rows[(4 * i + r, 4 * i + c)] = w * factor[(r, c)] * scale[c];
            }
        }
    }
    rows
}

fn is_fixed(idx: usize) -> bool {
    let (knot, order) = (idx / 4, idx % 4);
    order == 0 || (order == 1 && (knot == 0 || knot == KNOTS - 1))
}

// Minimizes |A_f x_f + A_c x_c| by Householder QR and writes the free
// derivatives back into `state`. Segment weights span many orders of
// magnitude when knot spacing is uneven, so rows are ordered by norm and
// columns are equilibrated before factoring.
fn solve_free_derivatives(rows: &DMatrix<f64>, state: &mut [f64; 4 * KNOTS]) -> Result<(), TrajectoryError> {
    let free: Vec<usize> = (0..4 * KNOTS).filter(|&i| !is_fixed(i)).collect();
    let fixed: Vec<usize> = (0..4 * KNOTS).filter(|&i| is_fixed(i)).collect();
    let m = rows.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    let row_norm = |r: usize| free.iter().map(|&j| rows[(r, j)].abs()).fold(0.0, f64::max);
    order.sort_by(|&x, &y| row_norm(y).total_cmp(&row_norm(x)));

    let col_scale: Vec<f64> = free
        .iter()
        .map(|&j| {
            let n = (0..m).map(|r| rows[(r, j)].powi(2)).sum::<f64>().sqrt();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect();
    let mut a = DMatrix::<f64>::zeros(m, free.len());
    let mut rhs = DVector::<f64>::zeros(m);
    for (ri, &r) in order.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            a[(ri, c)] = rows[(r, j)] * col_scale[c];
        }
        rhs[ri] = -fixed.iter().map(|&j| rows[(r, j)] * state[j]).sum::<f64>();
    }
    let qr = a.qr();
    let qtb = qr.q().transpose() * &rhs;
    let r = qr.r();
    if r.diagonal().iter().any(|d| d.abs() < 1e-300) {
        return Err(TrajectoryError::Singular);
    }
    let z = r.solve_upper_triangular(&qtb).ok_or(TrajectoryError::Singular)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(TrajectoryError::Singular);
    }
    for (c, &i) in free.iter().enumerate() {
        state[i] = z[c] * col_scale[c];
    }
    Ok(())
}
