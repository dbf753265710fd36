//! Command implementations. Each writes its artifacts into the output
//! directory and returns a summary for the caller to print.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use reciprocal_core::dynamics::{
    executed_separation, generate_classifier_dataset, read_dataset, simulate_tracking, write_dataset, ClassifierReport,
    ClassifierSet, ExecutedTrace, FailureClassifier,
};
use reciprocal_core::evolve::{evolve, EvolutionResult, GenerationStats, Genome};
use reciprocal_core::maneuver::{ManeuverDecision, Strategy, WaypointSchedule};
use reciprocal_core::search::{
    build_scenario, pso_per_scenario, Evaluator, ManeuverPolicy, PsoResult, RangeResult, Verdict, R_MAX,
};
use reciprocal_core::trajectory::{fit_min_snap, pairwise_min_distance, PolySpline};

use crate::config::RunConfig;
use crate::report::{num, read_csv, write_file, Header, LinePlot, Series, Table};
use crate::CliError;

pub const CHAMPION_FILE: &str = "champion.json";
pub const HISTORY_CSV: &str = "history.csv";
pub const HISTORY_SVG: &str = "history.svg";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SVG: &str = "sweep.svg";
pub const PSO_CSV: &str = "pso.csv";
pub const COMPARE_CSV: &str = "compare.csv";
pub const COMPARE_SVG: &str = "compare.svg";
pub const TRACE_CSV: &str = "trace.csv";
pub const TRAJECTORY_SVG: &str = "trajectory.svg";
pub const METRICS_CSV: &str = "classifier_metrics.csv";

pub fn dataset_file(strategy: Strategy) -> String {
    format!("dataset_{}.csv", strategy.label().to_lowercase())
}

/// A validated configuration plus its digest.
#[derive(Debug, Clone)]
pub struct Session {
    pub config: RunConfig,
    pub config_hash: String,
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        let config_hash = config.hash();
        Ok(Self { config, config_hash })
    }

    pub fn header(&self, command: &str) -> Header {
        Header::new(command, &self.config_hash, self.config.seed)
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self.config.out.as_path();
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn out_path(&self, name: &str) -> Result<PathBuf, CliError> {
        Ok(self.out_dir()?.join(name))
    }

    /// Classifier pair trained on freshly generated datasets.
    pub fn classifiers(&self) -> Result<ClassifierSet, CliError> {
        let cfg = &self.config;
        let data = cfg.dataset();
        let spec = cfg.spec();
        let train = |s: Strategy| {
            let samples = generate_classifier_dataset(s, cfg.classifier_samples, &data, &spec);
            FailureClassifier::train(s, &samples, cfg.classifier_k, cfg.classifier_seed)
                .map_err(|e| CliError::Runtime(format!("{} classifier: {e}", s.label())))
        };
        Ok(ClassifierSet {
            speed_change: train(Strategy::SpeedChange)?,
            direction_change: train(Strategy::DirectionChange)?,
        })
    }

    pub fn evaluator(&self) -> Result<Evaluator, CliError> {
        let classifiers = if self.config.use_classifier { Some(Arc::new(self.classifiers()?)) } else { None };
        Ok(Evaluator::new(self.config.evaluation(), classifiers))
    }
}

/// Writes a genome with the provenance header as its first key.
pub fn write_genome(path: &Path, genome: &Genome, header: &Header) -> Result<(), CliError> {
    let json = genome.to_json();
    let body = json.strip_prefix("{\n").expect("JSON object");
    let text = format!("{{\"header\": \"{}\",\n{body}\n", header.text());
    write_file(path, &text)
}

pub fn read_genome(path: &Path) -> Result<Genome, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read genome {}: {e}", path.display())))?;
    Genome::from_json(&text).map_err(|e| CliError::Runtime(format!("invalid genome {}: {e}", path.display())))
}

fn decision_cells(decision: Option<&ManeuverDecision>) -> [String; 3] {
    match decision {
        Some(d) => [d.strategy.label().to_string(), num(d.delta_v), num(d.phi)],
        None => ["none".into(), String::new(), String::new()],
    }
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub result: EvolutionResult,
    pub champion_path: PathBuf,
}

pub fn history_table(history: &[GenerationStats]) -> Table {
    let mut t = Table::new(&["generation", "best", "mean", "best_ever", "species", "feasible", "best_hidden_nodes"]);
    for s in history {
        t.push(vec![
            s.generation.to_string(),
            num(s.best),
            num(s.mean),
            num(s.best_ever),
            s.species.to_string(),
            s.feasible.to_string(),
            s.best_hidden_nodes.to_string(),
        ]);
    }
    t
}

/// Evolves a maneuver network; writes the champion, the fitness history and
/// its plot.
pub fn train(
    session: &Session,
    angles: Option<&[f64]>,
    on_generation: impl FnMut(&GenerationStats),
) -> Result<TrainSummary, CliError> {
    let cfg = &session.config;
    let angles = angles.unwrap_or(&cfg.training_angles);
    if angles.is_empty() {
        return Err(CliError::Config("training needs at least one angle".into()));
    }
    let evaluator = session.evaluator()?;
    let result = evolve(&cfg.evolution(), &evaluator, angles, on_generation);

    let header = session.header("train");
    let champion_path = session.out_path(CHAMPION_FILE)?;
    write_genome(&champion_path, &result.champion, &header)?;
    write_file(&session.out_path(HISTORY_CSV)?, &history_table(&result.history).to_csv(&header)?)?;
    let gen = |f: fn(&GenerationStats) -> f64| result.history.iter().map(|s| (s.generation as f64, f(s))).collect();
    let plot = LinePlot::new("Worst-case detection range", "generation", "R_min (m)")
        .with(Series::new("best", gen(|s| s.best), "#1f77b4"))
        .with(Series::new("best ever", gen(|s| s.best_ever), "#d62728").dashed())
        .with(Series::new("mean", gen(|s| s.mean), "#7f7f7f"));
    write_file(&session.out_path(HISTORY_SVG)?, &plot.render(&header))?;
    Ok(TrainSummary { result, champion_path })
}

// ---------------------------------------------------------------- sweep

/// Solves `r*` for every angle with the given policy.
pub fn sweep(
    session: &Session,
    policy: &dyn ManeuverPolicy,
    angles: Option<&[f64]>,
) -> Result<Vec<RangeResult>, CliError> {
    let angles = angles.unwrap_or(&session.config.test_angles);
    let evaluator = session.evaluator()?;
    let results = evaluator.worst_case_range(policy, angles).per_angle;

    let header = session.header("sweep");
    let mut t = Table::new(&["theta", "r_star", "feasible", "d_min", "strategy", "delta_v", "phi", "evaluations"]);
    for r in &results {
        let [strategy, dv, phi] = decision_cells(r.decision.as_ref());
        t.push(vec![
            num(r.theta),
            num(r.r_star),
            flag(r.feasible),
            num(r.d_min),
            strategy,
            dv,
            phi,
            r.evaluations.to_string(),
        ]);
    }
    write_file(&session.out_path(SWEEP_CSV)?, &t.to_csv(&header)?)?;
    let plot = LinePlot::new("Minimum detection range", "approach angle (deg)", "r* (m)").with(Series::new(
        "r*",
        results.iter().map(|r| (r.theta, r.r_star)).collect(),
        "#1f77b4",
    ));
    write_file(&session.out_path(SWEEP_SVG)?, &plot.render(&header))?;
    Ok(results)
}

// ---------------------------------------------------------------- pso

/// Offline swarm optimum of a constant decision for each angle.
pub fn pso(session: &Session, angles: Option<&[f64]>) -> Result<Vec<PsoResult>, CliError> {
    let angles = angles.unwrap_or(&session.config.compare_angles);
    let evaluator = session.evaluator()?;
    let pso_cfg = session.config.pso();
    let results: Vec<PsoResult> = angles.iter().map(|&th| pso_per_scenario(&evaluator, th, &pso_cfg)).collect();

    let header = session.header("pso");
    let mut t = Table::new(&["theta", "r_star", "feasible", "d_min", "strategy", "s", "delta_v", "phi"]);
    for p in &results {
        t.push(vec![
            num(p.theta),
            num(p.range.r_star),
            flag(p.range.feasible),
            num(p.range.d_min),
            p.best.strategy().label().to_string(),
            num(p.best.s),
            num(p.best.delta_v),
            num(p.best.phi),
        ]);
    }
    write_file(&session.out_path(PSO_CSV)?, &t.to_csv(&header)?)?;
    Ok(results)
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub theta: f64,
    pub network: f64,
    pub pso: f64,
}

impl ComparisonRow {
    /// Network `r*` minus swarm `r*`.
    pub fn delta(&self) -> f64 {
        self.network - self.pso
    }
}

/// Reads `(theta, r_star)` pairs from a swarm table.
pub fn read_pso_table(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let (columns, rows) = read_csv(path)?;
    let col = |name: &str| {
        columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Runtime(format!("{} lacks column {name}", path.display())))
    };
    let (ti, ri) = (col("theta")?, col("r_star")?);
    rows.iter()
        .map(|row| {
            let parse = |i: usize| {
                row.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| CliError::Runtime(format!("bad row in {}: {row:?}", path.display())))
            };
            Ok((parse(ti)?, parse(ri)?))
        })
        .collect()
}

/// Solves the network's `r*` at each swarm angle and tabulates the gap.
pub fn compare(
    session: &Session,
    policy: &dyn ManeuverPolicy,
    pso_table: &Path,
    angles: Option<&[f64]>,
) -> Result<Vec<ComparisonRow>, CliError> {
    let mut baseline = read_pso_table(pso_table)?;
    if let Some(keep) = angles {
        baseline.retain(|(th, _)| keep.contains(th));
    }
    let thetas: Vec<f64> = baseline.iter().map(|(th, _)| *th).collect();
    let network =
        if thetas.is_empty() { Vec::new() } else { session.evaluator()?.worst_case_range(policy, &thetas).per_angle };
    let rows: Vec<ComparisonRow> = baseline
        .iter()
        .zip(&network)
        .map(|(&(theta, pso), n)| ComparisonRow { theta, network: n.r_star, pso })
        .collect();

    let header = session.header("compare");
    let mut t = Table::new(&["theta", "network_r_star", "pso_r_star", "delta"]);
    for r in &rows {
        t.push(vec![num(r.theta), num(r.network), num(r.pso), num(r.delta())]);
    }
    write_file(&session.out_path(COMPARE_CSV)?, &t.to_csv(&header)?)?;
    let plot = LinePlot::new("Network vs offline optimum", "approach angle (deg)", "r* (m)")
        .with(Series::new("network", rows.iter().map(|r| (r.theta, r.network)).collect(), "#1f77b4"))
        .with(Series::new("PSO", rows.iter().map(|r| (r.theta, r.pso)).collect(), "#ff7f0e").dashed());
    write_file(&session.out_path(COMPARE_SVG)?, &plot.render(&header))?;
    Ok(rows)
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSummary {
    pub theta: f64,
    pub range: f64,
    /// Pipeline verdict; anything but `Executed` flies straight lines.
    pub verdict: Verdict,
    pub decision: Option<ManeuverDecision>,
    pub planned_min_distance: f64,
    pub executed_min_distance: f64,
    pub executed_min_time: f64,
    pub collision: bool,
    /// Maximum tracking error over both vehicles, m.
    pub max_tracking_error: f64,
}

fn straight_spline(state: &reciprocal_core::kinematics::UavState, duration: f64) -> Result<PolySpline, CliError> {
    let times = std::array::from_fn(|i| duration * i as f64 / 4.0);
    fit_min_snap(&WaypointSchedule::straight(state, times)).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Flies the policy's maneuver through the tracking controller at
/// `(theta, range)`; `range` defaults to the solved `r*`.
pub fn validate(
    session: &Session,
    policy: &dyn ManeuverPolicy,
    theta: f64,
    range: Option<f64>,
) -> Result<ValidationSummary, CliError> {
    let cfg = &session.config;
    let evaluator = session.evaluator()?;
    let range = match range {
        Some(r) => r,
        None => evaluator.regula_falsi_range(policy, theta).r_star.min(R_MAX),
    };
    let (a, b) = build_scenario(theta, range, cfg.cruise_speed).map_err(|e| CliError::Config(e.to_string()))?;
    let (verdict, decision, sa, sb) = match evaluator.plan_states(policy, &a, &b) {
        Ok(plan) => (Verdict::Executed, Some(plan.decision), plan.a, plan.b),
        Err(outcome) => {
            let duration = 2.0 * a.position.norm() / cfg.cruise_speed;
            (outcome.verdict, outcome.decision, straight_spline(&a, duration)?, straight_spline(&b, duration)?)
        }
    };
    let planned = pairwise_min_distance(&sa, &sb).map_err(|e| CliError::Runtime(e.to_string()))?.d_min;
    let spec = cfg.spec();
    let gains = cfg.gains();
    let sim =
        |s: &PolySpline| simulate_tracking(s, &spec, &gains, cfg.sim_dt).map_err(|e| CliError::Runtime(e.to_string()));
    let (ta, tb) = (sim(&sa)?, sim(&sb)?);
    let (executed, t_exec) =
        executed_separation(&ta, &tb).ok_or_else(|| CliError::Runtime("empty executed trace".into()))?;

    let header = session.header("validate");
    write_file(&session.out_path(TRACE_CSV)?, &trace_table(&ta, &tb).to_csv(&header)?)?;
    let path = |t: &ExecutedTrace, reference: bool| {
        t.points
            .iter()
            .map(|p| if reference { (p.reference.x, p.reference.y) } else { (p.position.x, p.position.y) })
            .collect()
    };
    let mut plot = LinePlot::new(format!("Encounter at {theta} deg, r = {range:.2} m"), "x (m)", "y (m)")
        .with(Series::new("A flown", path(&ta, false), "#1f77b4"))
        .with(Series::new("A planned", path(&ta, true), "#1f77b4").dashed())
        .with(Series::new("B flown", path(&tb, false), "#d62728"))
        .with(Series::new("B planned", path(&tb, true), "#d62728").dashed());
    plot.equal_aspect = true;
    write_file(&session.out_path(TRAJECTORY_SVG)?, &plot.render(&header))?;

    Ok(ValidationSummary {
        theta,
        range,
        verdict,
        decision,
        planned_min_distance: planned,
        executed_min_distance: executed,
        executed_min_time: t_exec,
        collision: executed < spec.d_col(),
        max_tracking_error: ta.max_tracking_error.max(tb.max_tracking_error),
    })
}

fn trace_table(a: &ExecutedTrace, b: &ExecutedTrace) -> Table {
    let mut t =
        Table::new(&["t", "a_x", "a_y", "a_ref_x", "a_ref_y", "b_x", "b_y", "b_ref_x", "b_ref_y", "separation"]);
    for (p, q) in a.points.iter().zip(&b.points) {
        t.push(vec![
            num(p.t),
            num(p.position.x),
            num(p.position.y),
            num(p.reference.x),
            num(p.reference.y),
            num(q.position.x),
            num(q.position.y),
            num(q.reference.x),
            num(q.reference.y),
            num((p.position - q.position).norm()),
        ]);
    }
    t
}

// ---------------------------------------------------------------- classifier

/// Generates and writes the labeled dataset of each strategy.
pub fn classifier_build(session: &Session) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &session.config;
    let header = session.header("classifier-build");
    let (data, spec) = (cfg.dataset(), cfg.spec());
    let mut paths = Vec::new();
    for s in [Strategy::SpeedChange, Strategy::DirectionChange] {
        let samples = generate_classifier_dataset(s, cfg.classifier_samples, &data, &spec);
        let path = session.out_path(&dataset_file(s))?;
        write_file(&path, &(header.csv_line() + &write_dataset(&samples)))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Cross-validates a classifier on each stored dataset.
pub fn classifier_report(session: &Session) -> Result<Vec<ClassifierReport>, CliError> {
    let cfg = &session.config;
    let mut reports = Vec::new();
    for s in [Strategy::SpeedChange, Strategy::DirectionChange] {
        let path = session.out_path(&dataset_file(s))?;
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::Runtime(format!("cannot read {} (run `classifier build` first): {e}", path.display()))
        })?;
        let samples = read_dataset(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let clf = FailureClassifier::train(s, &samples, cfg.classifier_k, cfg.classifier_seed)
            .map_err(|e| CliError::Runtime(format!("{} classifier: {e}", s.label())))?;
        reports.push(clf.report(cfg.classifier_folds));
    }
    let header = session.header("classifier-report");
    let mut t = Table::new(&["strategy", "samples", "controllable", "folds", "k", "misclassification"]);
    for r in &reports {
        t.push(vec![
            r.strategy.label().to_string(),
            r.samples.to_string(),
            r.controllable.to_string(),
            r.folds.to_string(),
            cfg.classifier_k.to_string(),
            num(r.misclassification),
        ]);
    }
    write_file(&session.out_path(METRICS_CSV)?, &t.to_csv(&header)?)?;
    Ok(reports)
}
