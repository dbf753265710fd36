//! Particle swarm search for the best constant decision in one scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConstantPolicy, Evaluator, RangeResult, RawDecision};
use crate::maneuver::{MAX_DELTA_V, MAX_PHI};

const DIMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit per dimension as a fraction of its range.
    pub max_velocity_fraction: f64,
    /// Box for `(s, delta_v, phi)`.
    pub bounds: [(f64, f64); DIMS],
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 60,
            iterations: 20,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            max_velocity_fraction: 0.2,
            bounds: [(0.0, 1.0), (0.0, MAX_DELTA_V), (0.0, MAX_PHI)],
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub theta: f64,
    pub best: RawDecision,
    pub range: RangeResult,
    /// Best `r*` after each iteration.
    pub history: Vec<f64>,
}

fn to_raw(x: &[f64; DIMS]) -> RawDecision {
    RawDecision { s: x[0], delta_v: x[1], phi: x[2] }
}

/// Minimizes the detection range of a constant decision at angle `theta`.
///
/// Global-best swarm with constriction-style coefficients. Particles are
/// scored concurrently; all random draws happen on one seeded stream between
/// iterations, so results do not depend on scheduling.
pub fn pso_per_scenario(evaluator: &Evaluator, theta: f64, cfg: &PsoConfig) -> PsoResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span: Vec<f64> = cfg.bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let vmax: Vec<f64> = span.iter().map(|s| s * cfg.max_velocity_fraction).collect();
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let n = cfg.particles.max(1);

    let mut pos: Vec<[f64; DIMS]> =
        (0..n).map(|_| std::array::from_fn(|d| draw(&mut rng, cfg.bounds[d].0, cfg.bounds[d].1))).collect();
    let mut vel: Vec<[f64; DIMS]> =
        (0..n).map(|_| std::array::from_fn(|d| draw(&mut rng, -vmax[d], vmax[d]))).collect();

    let score = |x: &[f64; DIMS]| evaluator.regula_falsi_range(&ConstantPolicy(to_raw(x)), theta);
    let mut personal: Vec<([f64; DIMS], RangeResult)> = Vec::new();
    let mut global: Option<([f64; DIMS], RangeResult)> = None;
    let mut history = Vec::new();
    let collapsed = span.iter().all(|s| *s == 0.0);

    for it in 0..cfg.iterations.max(1) {
        let scores: Vec<RangeResult> = pos.par_iter().map(score).collect();
        for (i, r) in scores.into_iter().enumerate() {
            if it == 0 {
                personal.push((pos[i], r));
            } else if r.r_star < personal[i].1.r_star {
                personal[i] = (pos[i], r);
            }
            if global.as_ref().is_none_or(|g| r.r_star < g.1.r_star) {
                global = Some((pos[i], r));
            }
        }
        let g = global.as_ref().expect("at least one particle").0;
        history.push(global.as_ref().expect("at least one particle").1.r_star);
        if collapsed {
            break;
        }
        for i in 0..n {
            for d in 0..DIMS {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let v = cfg.inertia * vel[i][d]
                    + cfg.cognitive * r1 * (personal[i].0[d] - pos[i][d])
                    + cfg.social * r2 * (g[d] - pos[i][d]);
                vel[i][d] = v.clamp(-vmax[d], vmax[d]);
                let x = pos[i][d] + vel[i][d];
                let (lo, hi) = cfg.bounds[d];
                if x < lo || x > hi {
                    vel[i][d] = 0.0;
                }
                pos[i][d] = x.clamp(lo, hi);
            }
        }
    }
    let (x, range) = global.expect("at least one particle");
    PsoResult { theta, best: to_raw(&x), range, history }
}
