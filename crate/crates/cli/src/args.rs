//! Flag parsing and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, Session};
use crate::config::{parse_angles, RunConfig};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "reciprocal", version, about = "Train and evaluate reciprocal UAV collision-avoidance maneuvers")]
pub struct Cli {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Angle set in degrees: `30,60,90` or `start:end:step`.
    #[arg(long, global = true, value_name = "LIST|RANGE", allow_hyphen_values = true)]
    pub angles: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Genome file written by `train`.
    #[arg(long, global = true, value_name = "PATH")]
    pub genome: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a maneuver network; writes champion.json, history.csv, history.svg.
    Train,
    /// Solve the detection range of a genome at each angle; writes sweep.csv, sweep.svg.
    Sweep,
    /// Offline swarm optimum per angle; writes pso.csv.
    Pso,
    /// Compare a genome with a swarm table; writes compare.csv, compare.svg.
    Compare {
        /// Table written by `pso`.
        #[arg(long, value_name = "PATH")]
        pso: PathBuf,
    },
    /// Fly one encounter through the tracking controller; writes trace.csv, trajectory.svg.
    Validate {
        /// Approach angle, degrees.
        #[arg(long)]
        theta: f64,
        /// Detection range, m (default: the solved minimum).
        #[arg(long)]
        range: Option<f64>,
    },
    /// Controllability datasets and their cross-validation metrics.
    Classifier {
        #[command(subcommand)]
        action: ClassifierAction,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum ClassifierAction {
    /// Generate labeled datasets for both strategies.
    Build,
    /// Cross-validate on stored datasets; writes classifier_metrics.csv.
    Report,
}

impl Cli {
    /// Loaded configuration with flag overrides applied.
    pub fn session(&self) -> Result<Session, CliError> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Session::new(config)
    }

    fn angles(&self) -> Result<Option<Vec<f64>>, CliError> {
        self.angles.as_deref().map(parse_angles).transpose()
    }

    fn genome(&self) -> Result<reciprocal_core::evolve::Genome, CliError> {
        let path = self.genome.as_deref().ok_or_else(|| CliError::Config("--genome is required".into()))?;
        commands::read_genome(path)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let session = cli.session()?;
    let angles = cli.angles()?;
    let angles = angles.as_deref();
    match &cli.command {
        Command::Train => {
            let summary = commands::train(&session, angles, |s| {
                eprintln!(
                    "generation {:>3}  best {:>9.3}  mean {:>9.3}  best-ever {:>9.3}  species {:>2}  feasible {}",
                    s.generation, s.best, s.mean, s.best_ever, s.species, s.feasible
                );
            })?;
            let best = summary.result.history.last().map_or(f64::NAN, |s| s.best_ever);
            println!("champion R_min {best:.3} m -> {}", summary.champion_path.display());
        }
        Command::Sweep => {
            let genome = cli.genome()?;
            let rows = commands::sweep(&session, &genome, angles)?;
            let feasible = rows.iter().filter(|r| r.feasible).count();
            let worst = rows.iter().map(|r| r.r_star).fold(f64::NAN, f64::max);
            println!("{feasible}/{} angles feasible, worst r* {worst:.3} m", rows.len());
        }
        Command::Pso => {
            for p in commands::pso(&session, angles)? {
                println!("theta {:>6.1}  r* {:>8.3}  {}", p.theta, p.range.r_star, p.best.strategy().label());
            }
        }
        Command::Compare { pso } => {
            let genome = cli.genome()?;
            for r in commands::compare(&session, &genome, pso, angles)? {
                println!(
                    "theta {:>6.1}  network {:>8.3}  pso {:>8.3}  delta {:>7.3}",
                    r.theta,
                    r.network,
                    r.pso,
                    r.delta()
                );
            }
        }
        Command::Validate { theta, range } => {
            let genome = cli.genome()?;
            let v = commands::validate(&session, &genome, *theta, *range)?;
            println!(
                "theta {} r {:.3}: {:?}, planned d_min {:.4} m, executed d_min {:.4} m at t={:.3} s, collision {}",
                v.theta,
                v.range,
                v.verdict,
                v.planned_min_distance,
                v.executed_min_distance,
                v.executed_min_time,
                v.collision
            );
        }
        Command::Classifier { action: ClassifierAction::Build } => {
            for p in commands::classifier_build(&session)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Classifier { action: ClassifierAction::Report } => {
            for r in commands::classifier_report(&session)? {
                println!(
                    "{}: {} samples, {} controllable, {}-fold misclassification {:.2}%",
                    r.strategy.label(),
                    r.samples,
                    r.controllable,
                    r.folds,
                    100.0 * r.misclassification
                );
            }
        }
    }
    Ok(())
}
