use serde::{Deserialize, Serialize};

use super::{fit_min_snap, Poly, PolySpline, SplineSegment, TrajectoryError};
use crate::maneuver::WaypointSchedule;

/// Eigenvalues this close to the real axis are tried as critical points.
/// Extra candidates only cost an evaluation, so the filter is loose enough to
/// keep split double roots.
const CANDIDATE_IMAG_TOL: f64 = 1e-4;
const NEWTON_STEPS: usize = 3;
const FALLBACK_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub d_min: f64,
    pub t_star: f64,
}

/// Global minimum of `|P_A(t) - P_B(t)|` over the common time span.
///
/// Per segment the squared separation is a degree-14 polynomial in normalized
/// time; its critical points come from the companion-matrix roots of the
/// derivative, polished by Newton steps. A coarse sample per segment guards
/// against roots lost to conditioning.
pub fn pairwise_min_distance(a: &PolySpline, b: &PolySpline) -> Result<SeparationResult, TrajectoryError> {
    let (ka, kb) = (a.knots(), b.knots());
    let span = ka[ka.len() - 1] - ka[0];
    if ka.iter().zip(&kb).any(|(x, y)| (x - y).abs() > 1e-12 * span.max(1.0)) {
        return Err(TrajectoryError::KnotMismatch);
    }
    let mut best = SeparationResult { d_min: f64::INFINITY, t_star: ka[0] };
    for (sa, sb) in a.segments.iter().zip(&b.segments) {
        let (d2, tau) = segment_minimum(sa, sb);
        let d = d2.max(0.0).sqrt();
        if d < best.d_min {
            best = SeparationResult { d_min: d, t_star: sa.t0 + tau * sa.duration };
        }
    }
    Ok(best)
}

/// Fits both schedules and returns their minimum separation.
pub fn executed_min_distance(a: &WaypointSchedule, b: &WaypointSchedule) -> Result<SeparationResult, TrajectoryError> {
    let sa = fit_min_snap(a)?;
    let sb = fit_min_snap(b)?;
    pairwise_min_distance(&sa, &sb)
}

// (squared distance, tau) at the segment minimum.
fn segment_minimum(sa: &SplineSegment, sb: &SplineSegment) -> (f64, f64) {
    let dx = &sa.axis_poly(0) - &sb.axis_poly(0);
    let dy = &sa.axis_poly(1) - &sb.axis_poly(1);
    let f = &(&dx * &dx) + &(&dy * &dy);
    let fp = f.derivative();
    let fpp = fp.derivative();

    let value = |tau: f64| {
        let (x, y) = (dx.eval(tau), dy.eval(tau));
        x * x + y * y
    };
    let mut best = (value(0.0), 0.0);
    let consider = |tau: f64, best: &mut (f64, f64)| {
        let tau = tau.clamp(0.0, 1.0);
        let v = value(tau);
        if v < best.0 {
            *best = (v, tau);
        }
    };
    consider(1.0, &mut best);

    for (re, im) in fp.roots() {
        if im.abs() > CANDIDATE_IMAG_TOL || !(-1e-3..=1.0 + 1e-3).contains(&re) {
            continue;
        }
        consider(newton_polish(&fp, &fpp, re), &mut best);
    }

    // fallback: any sample beating the analytic candidates gets refined
    let samples: Vec<f64> = (0..=FALLBACK_SAMPLES).map(|k| value(k as f64 / FALLBACK_SAMPLES as f64)).collect();
    for k in 1..FALLBACK_SAMPLES {
        if samples[k] < best.0 && samples[k] <= samples[k - 1] && samples[k] <= samples[k + 1] {
            let lo = (k - 1) as f64 / FALLBACK_SAMPLES as f64;
            let hi = (k + 1) as f64 / FALLBACK_SAMPLES as f64;
            consider(golden_section(&value, lo, hi), &mut best);
        }
    }
    best
}

fn newton_polish(fp: &Poly, fpp: &Poly, mut tau: f64) -> f64 {
    for _ in 0..NEWTON_STEPS {
        let d = fpp.eval(tau);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = tau - fp.eval(tau) / d;
        if !next.is_finite() || fp.eval(next).abs() > fp.eval(tau).abs() {
            break;
        }
        tau = next;
    }
    tau
}

fn golden_section(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
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
    0.5 * (lo + hi)
}
