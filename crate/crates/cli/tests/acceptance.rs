//! Acceptance gate: each criterion prints one PASS/FAIL line and the process
//! exits non-zero if any fails.
//!
//! Criteria 5, 6, 7 and 9 share one desk-scale training run.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reciprocal_cli::commands::{self, Session, HISTORY_CSV};
use reciprocal_cli::config::RunConfig;
use reciprocal_core::dynamics::UavSpec;
use reciprocal_core::evolve::Genome;
use reciprocal_core::kinematics::{closest_approach, predict_collision, separation_at, UavState, Vec2};
use reciprocal_core::maneuver::{
    decision_to_schedules, ManeuverDecision, Strategy, WaypointSchedule, MAX_DELTA_V, MAX_PHI,
};
use reciprocal_core::search::{build_scenario, ConstantPolicy, Evaluator, INFEASIBLE_RANGE, R_MAX};
use reciprocal_core::trajectory::{fit_min_snap, pairwise_min_distance, PolySpline, SEGMENTS};

const D_COL: f64 = 1.42;

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> UavState {
    UavState::from_xy(
        rng.random_range(-100.0..100.0),
        rng.random_range(-100.0..100.0),
        rng.random_range(-25.0..25.0),
        rng.random_range(-25.0..25.0),
    )
}

/// Minimum of `f` on `[lo, hi]` by `n`-point sampling, resampled with `n`
/// points around the best sample.
fn two_level_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let scan = |lo: f64, hi: f64| {
        let step = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let t = lo + step * i as f64;
                (t, f(t))
            })
            .fold((lo, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best })
    };
    let step = (hi - lo) / (n - 1) as f64;
    let (t, _) = scan(lo, hi);
    scan((t - step).max(lo), (t + step).min(hi))
}

fn geometry_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let horizon = 30.0;
    let (mut worst_t, mut worst_d) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let (a, b) = (random_state(&mut rng), random_state(&mut rng));
        let got = closest_approach(&a, &b, 0.0, horizon);
        let (t, d) = two_level_min(|t| separation_at(&a, &b, t), 0.0, horizon, 100_000);
        worst_d = worst_d.max((got.d_min - d).abs());
        if (a.velocity - b.velocity).norm() > 1e-3 {
            worst_t = worst_t.max((got.t_min - t).abs());
        }
        ensure(worst_d < 1e-4 && worst_t < 1e-3, || format!("pair {i}: |dt| {worst_t:.2e}, |dd| {worst_d:.2e}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 pairs, max |dt| {worst_t:.1e} s, max |dd| {worst_d:.1e} m, {elapsed:.1?}"))
}

fn random_maneuver(rng: &mut ChaCha8Rng) -> (WaypointSchedule, WaypointSchedule) {
    let spec = UavSpec::default();
    loop {
        let theta = rng.random_range(1.0..=180.0);
        let r = rng.random_range(3.0..80.0);
        let speed = rng.random_range(8.0..25.0);
        let Ok((a, b)) = build_scenario(theta, r, speed) else { continue };
        let (angle, offset) =
            (rng.random_range(-3.0..3.0), Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)));
        let (a, b) = (a.rotated(angle).translated(offset), b.rotated(angle).translated(offset));
        let prediction = predict_collision(&a, &b, spec.d_col(), 0.0, 1000.0);
        let Some(t_col) = prediction.t_col else { continue };
        let t2 = rng.random_range(0.05..0.5);
        if t2 >= t_col {
            continue;
        }
        let decision = if rng.random_bool(0.5) {
            ManeuverDecision::new(Strategy::SpeedChange, rng.random_range(0.0..MAX_DELTA_V), 0.0, t2)
        } else {
            ManeuverDecision::new(Strategy::DirectionChange, 0.0, rng.random_range(0.0..MAX_PHI), t2)
        };
        if let Ok(pair) = decision_to_schedules(&decision.expect("parameters in range"), &a, &b, &prediction) {
            return pair;
        }
    }
}

fn fit(s: &WaypointSchedule) -> Result<PolySpline, String> {
    fit_min_snap(s).map_err(|e| e.to_string())
}

fn spline_min_distance() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let (sa, sb) = random_maneuver(&mut rng);
        let (a, b) = (fit(&sa)?, fit(&sb)?);
        let got = pairwise_min_distance(&a, &b).map_err(|e| e.to_string())?;
        let (t0, t1) = (a.start_time(), a.end_time());
        let step = (t1 - t0) / 999_999.0;
        let sampled = (0..1_000_000)
            .map(|k| (a.position(t0 + step * k as f64) - b.position(t0 + step * k as f64)).norm())
            .fold(f64::INFINITY, f64::min);
        let err = (got.d_min - sampled).abs();
        worst = worst.max(err);
        ensure(err < 1e-4, || format!("schedule pair {i}: analytic {} vs sampled {sampled}", got.d_min))?;
    }
    let mut worst_line = 0.0f64;
    for i in 0..200 {
        let (a, b) = (random_state(&mut rng), random_state(&mut rng));
        let t_end = rng.random_range(1.0..20.0);
        let times = std::array::from_fn(|k| t_end * k as f64 / 4.0);
        let (fa, fb) = (fit(&WaypointSchedule::straight(&a, times))?, fit(&WaypointSchedule::straight(&b, times))?);
        let got = pairwise_min_distance(&fa, &fb).map_err(|e| e.to_string())?.d_min;
        let (dp, dv) = (a.position - b.position, a.velocity - b.velocity);
        let t = if dv.norm_squared() > 0.0 { (-dp.dot(&dv) / dv.norm_squared()).clamp(0.0, t_end) } else { 0.0 };
        let exact = (dp + dv * t).norm();
        worst_line = worst_line.max((got - exact).abs());
        ensure(worst_line < 1e-6, || format!("straight pair {i}: {got} vs closed form {exact}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("max err {worst:.1e} m (maneuvers), {worst_line:.1e} m (straight), {elapsed:.1?}"))
}

fn min_snap_contract() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut interp, mut cont) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (sa, _) = random_maneuver(&mut rng);
        let s = fit(&sa)?;
        for w in &sa.waypoints {
            interp = interp.max((s.position(w.t) - w.position).norm());
        }
        for k in 1..SEGMENTS {
            let (left, right) = (&s.segments[k - 1], &s.segments[k]);
            for order in 1..=4 {
                let (l, r) = (left.derivative_at_tau(1.0, order), right.derivative_at_tau(0.0, order));
                cont = cont.max((l - r).norm() / l.norm().max(r.norm()).max(1.0));
            }
        }
    }
    ensure(interp < 1e-9, || format!("waypoint error {interp:.2e} m"))?;
    ensure(cont < 1e-6, || format!("normalized derivative jump {cont:.2e}"))?;
    let mut higher = 0.0f64;
    for _ in 0..50 {
        let st = random_state(&mut rng);
        let t_end = rng.random_range(0.5..20.0);
        let s = fit(&WaypointSchedule::straight(&st, std::array::from_fn(|k| t_end * k as f64 / 4.0)))?;
        for seg in &s.segments {
            for c in [&seg.x, &seg.y] {
                let scale = c[0].abs().max(c[1].abs()).max(1.0);
                higher = higher.max(c[2..].iter().map(|v| v.abs()).fold(0.0, f64::max) / scale);
            }
        }
    }
    ensure(higher < 1e-9, || format!("straight input kept degree >= 2 terms ({higher:.2e})"))?;
    Ok(format!("waypoints {interp:.1e} m, continuity {cont:.1e}, straight-line higher terms {higher:.1e}"))
}

/// First safe range on a 2000-point grid, refined by bisection.
fn bisection_range(ev: &Evaluator, policy: &ConstantPolicy, theta: f64) -> Option<f64> {
    let safe = |r: f64| ev.evaluate(policy, theta, r).expect("valid scenario").d_min >= D_COL;
    let grid: Vec<f64> = (0..2000).map(|i| D_COL + (R_MAX - D_COL) * i as f64 / 1999.0).collect();
    let first = grid.iter().position(|&r| safe(r))?;
    if first == 0 {
        return Some(grid[0]);
    }
    let (mut lo, mut hi) = (grid[first - 1], grid[first]);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if safe(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn regula_falsi_vs_bisection() -> Verdict {
    let ev = Evaluator::default();
    let dc20 = ConstantPolicy::direction_change(20f64.to_radians());
    let mut lines = Vec::new();
    for theta in [30.0, 90.0, 150.0] {
        let rf = ev.regula_falsi_range(&dc20, theta);
        let oracle =
            bisection_range(&ev, &dc20, theta).ok_or_else(|| format!("{theta} deg: oracle found no safe range"))?;
        ensure(rf.feasible && (rf.r_star - oracle).abs() <= 0.05, || {
            format!("{theta} deg: regula falsi {} vs bisection {oracle}", rf.r_star)
        })?;
        lines.push(format!("{theta}:{:.3}/{oracle:.3}", rf.r_star));
    }
    let null = ev.regula_falsi_range(&ConstantPolicy::speed_change(0.0), 90.0);
    ensure(null.r_star == INFEASIBLE_RANGE, || format!("null model r* {}", null.r_star))?;
    Ok(format!("r* rf/bisection {}, null model {}", lines.join(" "), null.r_star))
}

struct Desk {
    session: Session,
    champion: Genome,
    r_min: f64,
    train_time: Duration,
}

fn desk_session(out: &Path) -> Result<Session, String> {
    let text = format!(
        "out = {:?}\nseed = 1\npopulation = 40\ngenerations = 15\n\
         training_angles = [15.0, 30.0, 45.0, 60.0, 75.0, 90.0, 105.0, 120.0, 135.0, 150.0, 165.0, 180.0]\n",
        out.display().to_string()
    );
    Session::new(RunConfig::parse(&text).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn desk_training(out: &Path) -> Result<Desk, String> {
    let session = desk_session(out)?;
    let start = Instant::now();
    let summary = commands::train(&session, None, |_| {}).map_err(|e| e.to_string())?;
    let train_time = start.elapsed();
    let r_min = summary.result.champion.fitness.ok_or("champion has no fitness")?;
    Ok(Desk { session, champion: summary.result.champion, r_min, train_time })
}

fn desk_feasibility(desk: &Desk) -> Verdict {
    ensure(desk.r_min < INFEASIBLE_RANGE, || format!("champion R_min {}", desk.r_min))?;
    let angles: Vec<f64> = (1..=60).map(|i| 3.0 * i as f64).collect();
    let rows = commands::sweep(&desk.session, &desk.champion, Some(&angles)).map_err(|e| e.to_string())?;
    let safe = rows.iter().filter(|r| r.feasible && r.d_min >= D_COL).count();
    ensure(safe * 100 >= 95 * rows.len(), || format!("{safe}/{} test angles safe", rows.len()))?;
    ensure(desk.train_time < Duration::from_secs(1800), || format!("training took {:?}", desk.train_time))?;
    Ok(format!(
        "R_min {:.3} m, {safe}/{} test angles with d_min >= {D_COL} m, trained in {:.1?}",
        desk.r_min,
        rows.len(),
        desk.train_time
    ))
}

fn trend(desk: &Desk) -> Verdict {
    let ev = desk.session.evaluator().map_err(|e| e.to_string())?;
    let mean_r = |angles: Vec<f64>| {
        let rec = ev.worst_case_range(&desk.champion, &angles);
        rec.per_angle.iter().map(|r| r.r_star).sum::<f64>() / angles.len() as f64
    };
    let small = mean_r((5..=35).map(f64::from).collect());
    let large = mean_r((150..=180).map(f64::from).collect());
    ensure(large > small, || format!("mean r* over [150, 180] {large:.3} <= over [5, 35] {small:.3}"))?;
    Ok(format!("mean r* {small:.3} m over [5, 35] deg < {large:.3} m over [150, 180] deg"))
}

fn pso_baseline(desk: &Desk) -> Verdict {
    let pso = commands::pso(&desk.session, None).map_err(|e| e.to_string())?;
    ensure(pso.len() == 6, || format!("{} swarm angles", pso.len()))?;
    let table = desk.session.config.out.join(commands::PSO_CSV);
    let rows = commands::compare(&desk.session, &desk.champion, &table, None).map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    for r in &rows {
        ensure(r.pso <= r.network + 0.1, || format!("{} deg: PSO {} > network {} + 0.1", r.theta, r.pso, r.network))?;
        gaps.push(format!("{}:{:.2}", r.theta, r.delta()));
    }
    let below = rows.iter().filter(|r| r.theta < 140.0).map(|r| r.delta()).fold(0.0, f64::max);
    Ok(format!("network - PSO gap per angle {}; largest below 140 deg {below:.2} m", gaps.join(" ")))
}

fn classifier_cv(out: &Path) -> Verdict {
    let text = format!("out = {:?}\nclassifier_samples = 1000\nclassifier_folds = 10\n", out.display().to_string());
    let session = Session::new(RunConfig::parse(&text).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    commands::classifier_build(&session).map_err(|e| e.to_string())?;
    let reports = commands::classifier_report(&session).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for r in &reports {
        ensure(r.samples == 1000 && r.folds == 10, || format!("{:?}", r))?;
        ensure(r.misclassification <= 0.2, || {
            format!("{} misclassification {:.1}%", r.strategy.label(), 100.0 * r.misclassification)
        })?;
        parts.push(format!("{} {:.1}%", r.strategy.label(), 100.0 * r.misclassification));
    }
    Ok(format!("10-fold misclassification {}", parts.join(", ")))
}

fn dynamics_validation(desk: &Desk) -> Verdict {
    let v = commands::validate(&desk.session, &desk.champion, 180.0, None).map_err(|e| e.to_string())?;
    let ratio = v.executed_min_distance / v.planned_min_distance;
    ensure(ratio >= 0.85, || format!("executed/planned {ratio:.4}"))?;
    ensure(v.executed_min_distance >= D_COL, || format!("executed d_min {} < {D_COL}", v.executed_min_distance))?;
    Ok(format!(
        "r* {:.3} m: planned {:.4} m, executed {:.4} m (ratio {ratio:.4}), max tracking error {:.1e} m",
        v.range, v.planned_min_distance, v.executed_min_distance, v.max_tracking_error
    ))
}

fn determinism(root: &Path) -> Verdict {
    let config = root.join("small.toml");
    std::fs::write(
        &config,
        "population = 12\ngenerations = 4\ntraining_angles = [30.0, 90.0, 150.0, 180.0]\nclassifier_samples = 300\n",
    )
    .map_err(|e| e.to_string())?;
    let run = |dir: &str| -> Result<Vec<u8>, String> {
        let out = root.join(dir);
        let status = Command::new(env!("CARGO_BIN_EXE_reciprocal"))
            .args(["--config", config.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap(), "train"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        std::fs::read(out.join(HISTORY_CSV)).map_err(|e| e.to_string())
    };
    let (a, b) = (run("first")?, run("second")?);
    ensure(a == b, || "history CSVs differ".into())?;
    Ok(format!("two runs wrote identical {} byte history files", a.len()))
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Verdict)> = vec![
        ("1 geometry oracle", geometry_oracle()),
        ("2 spline min-distance oracle", spline_min_distance()),
        ("3 minimum-snap contract", min_snap_contract()),
        ("4 regula falsi vs bisection", regula_falsi_vs_bisection()),
    ];
    match desk_training(&root.path().join("desk")) {
        Ok(desk) => {
            results.push(("5 desk-scale training", desk_feasibility(&desk)));
            results.push(("6 range grows with approach angle", trend(&desk)));
            results.push(("7 PSO baseline", pso_baseline(&desk)));
            results.push(("8 classifier cross-validation", classifier_cv(&root.path().join("classifier"))));
            results.push(("9 dynamics validation", dynamics_validation(&desk)));
        }
        Err(e) => {
            for name in [
                "5 desk-scale training",
                "6 range grows with approach angle",
                "7 PSO baseline",
                "9 dynamics validation",
            ] {
                results.push((name, Err(format!("training failed: {e}"))));
            }
            results.push(("8 classifier cross-validation", classifier_cv(&root.path().join("classifier"))));
        }
    }
    results.push(("10 deterministic training history", determinism(root.path())));
    results.sort_by_key(|(name, _)| name.split(' ').next().and_then(|n| n.parse::<u32>().ok()));

    let mut failed = 0;
    for (name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
