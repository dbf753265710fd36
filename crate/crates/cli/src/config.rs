//! Run configuration: a flat TOML table in which every key is optional.

use std::path::{Path, PathBuf};

use reciprocal_core::dynamics::{DatasetConfig, PdGains, UavSpec, DEFAULT_FOLDS, DEFAULT_K};
use reciprocal_core::evolve::{EvolutionConfig, MutationConfig};
use reciprocal_core::search::{test_angles, training_angles, EvaluationConfig, PsoConfig, SEARCH_HORIZON};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Every tunable of a run. Unknown keys are rejected on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,

    pub mass: f64,
    pub diameter: f64,
    pub thrust_to_weight: f64,
    pub cruise_speed: f64,

    pub t2_offset: f64,
    pub horizon: f64,
    pub accel_margin: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scan_points: usize,

    pub kp: f64,
    pub kd: f64,
    pub feedforward: f64,
    pub sim_dt: f64,

    pub use_classifier: bool,
    pub classifier_samples: usize,
    pub classifier_k: usize,
    pub classifier_folds: usize,
    pub classifier_seed: u64,
    pub classifier_reference_range: f64,
    pub classifier_v1_min: f64,
    pub classifier_v1_max: f64,

    pub population: usize,
    pub generations: usize,
    pub compatibility_threshold: f64,
    pub elite_fraction: f64,
    pub survival_fraction: f64,
    pub crossover_prob: f64,
    pub stagnation_limit: usize,
    pub weight_perturb_prob: f64,
    pub weight_sigma: f64,
    pub weight_replace_prob: f64,
    pub add_connection_prob: f64,
    pub add_node_prob: f64,
    pub c_disjoint: f64,
    pub c_weight: f64,

    pub pso_particles: usize,
    pub pso_iterations: usize,
    pub pso_inertia: f64,
    pub pso_cognitive: f64,
    pub pso_social: f64,
    pub pso_max_velocity_fraction: f64,

    /// Degrees; the worst case over these is the training objective.
    pub training_angles: Vec<f64>,
    /// Degrees; default set for `sweep`.
    pub test_angles: Vec<f64>,
    /// Degrees; default set for `pso`.
    pub compare_angles: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = UavSpec::default();
        let eval = EvaluationConfig::default();
        let gains = PdGains::default();
        let data = DatasetConfig::default();
        let evo = EvolutionConfig::default();
        let m = MutationConfig::default();
        let pso = PsoConfig::default();
        Self {
            seed: evo.seed,
            out: PathBuf::from("out"),
            mass: spec.mass,
            diameter: spec.diameter,
            thrust_to_weight: spec.thrust_to_weight,
            cruise_speed: spec.cruise_speed,
            t2_offset: eval.t2_offset,
            horizon: SEARCH_HORIZON,
            accel_margin: eval.accel_margin,
            tolerance: eval.tolerance,
            max_iterations: eval.max_iterations,
            scan_points: eval.scan_points,
            kp: gains.kp,
            kd: gains.kd,
            feedforward: gains.feedforward,
            sim_dt: data.dt,
            use_classifier: true,
            classifier_samples: 1000,
            classifier_k: DEFAULT_K,
            classifier_folds: DEFAULT_FOLDS,
            classifier_seed: data.seed,
            classifier_reference_range: data.reference_range,
            classifier_v1_min: data.v1_min,
            classifier_v1_max: data.v1_max,
            population: evo.population,
            generations: evo.generations,
            compatibility_threshold: evo.compatibility_threshold,
            elite_fraction: evo.elite_fraction,
            survival_fraction: evo.survival_fraction,
            crossover_prob: evo.crossover_prob,
            stagnation_limit: evo.stagnation_limit,
            weight_perturb_prob: m.weight_perturb_prob,
            weight_sigma: m.weight_sigma,
            weight_replace_prob: m.weight_replace_prob,
            add_connection_prob: m.add_connection_prob,
            add_node_prob: m.add_node_prob,
            c_disjoint: m.c_disjoint,
            c_weight: m.c_weight,
            pso_particles: pso.particles,
            pso_iterations: pso.iterations,
            pso_inertia: pso.inertia,
            pso_cognitive: pso.cognitive,
            pso_social: pso.social,
            pso_max_velocity_fraction: pso.max_velocity_fraction,
            training_angles: training_angles(),
            test_angles: test_angles(),
            compare_angles: vec![30.0, 60.0, 90.0, 120.0, 150.0, 180.0],
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    check(v.is_finite() && v > 0.0, || format!("{name} must be positive, got {v}"))
}

impl RunConfig {
    /// Reads a TOML file; a missing path means all defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.evolution().validate().map_err(CliError::Config)?;
        for (name, v) in [("t2_offset", self.t2_offset), ("horizon", self.horizon), ("tolerance", self.tolerance)] {
            positive(name, v)?;
        }
        positive("classifier_reference_range", self.classifier_reference_range)?;
        check(self.accel_margin > 0.0 && self.accel_margin <= 1.0, || {
            format!("accel_margin must lie in (0, 1], got {}", self.accel_margin)
        })?;
        check(self.sim_dt > 0.0 && self.sim_dt <= 0.05, || {
            format!("sim_dt must lie in (0, 0.05], got {}", self.sim_dt)
        })?;
        for (name, v) in [("kp", self.kp), ("kd", self.kd), ("feedforward", self.feedforward)] {
            check(v.is_finite() && v >= 0.0, || format!("{name} must be non-negative, got {v}"))?;
        }
        check(self.max_iterations > 0, || "max_iterations must be positive".into())?;
        check(self.classifier_k > 0, || "classifier_k must be positive".into())?;
        check(self.classifier_folds >= 2, || "classifier_folds must be at least 2".into())?;
        check(self.classifier_samples >= self.classifier_folds, || {
            format!("classifier_samples ({}) must be at least classifier_folds", self.classifier_samples)
        })?;
        check(self.classifier_v1_min > 0.0 && self.classifier_v1_min <= self.classifier_v1_max, || {
            format!("invalid speed range [{}, {}]", self.classifier_v1_min, self.classifier_v1_max)
        })?;
        check(self.pso_particles > 0 && self.pso_iterations > 0, || {
            "pso_particles and pso_iterations must be positive".into()
        })?;
        positive("pso_max_velocity_fraction", self.pso_max_velocity_fraction)?;
        check(!self.training_angles.is_empty(), || "training_angles must not be empty".into())?;
        for (name, set) in [
            ("training_angles", &self.training_angles),
            ("test_angles", &self.test_angles),
            ("compare_angles", &self.compare_angles),
        ] {
            validate_angles(name, set)?;
        }
        Ok(())
    }

    /// Hex digest of the run-defining keys; `out` is excluded.
    pub fn hash(&self) -> String {
        let canonical = Self { out: PathBuf::new(), ..self.clone() };
        let text = toml::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn spec(&self) -> UavSpec {
        UavSpec {
            mass: self.mass,
            diameter: self.diameter,
            thrust_to_weight: self.thrust_to_weight,
            cruise_speed: self.cruise_speed,
        }
    }

    pub fn gains(&self) -> PdGains {
        PdGains { kp: self.kp, kd: self.kd, feedforward: self.feedforward }
    }

    pub fn evaluation(&self) -> EvaluationConfig {
        EvaluationConfig {
            spec: self.spec(),
            t2_offset: self.t2_offset,
            horizon: self.horizon,
            accel_margin: self.accel_margin,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            scan_points: self.scan_points,
        }
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            v1_min: self.classifier_v1_min,
            v1_max: self.classifier_v1_max,
            reference_range: self.classifier_reference_range,
            t2_offset: self.t2_offset,
            dt: self.sim_dt,
            gains: self.gains(),
            seed: self.classifier_seed,
        }
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            population: self.population,
            generations: self.generations,
            mutation: MutationConfig {
                weight_perturb_prob: self.weight_perturb_prob,
                weight_sigma: self.weight_sigma,
                weight_replace_prob: self.weight_replace_prob,
                add_connection_prob: self.add_connection_prob,
                add_node_prob: self.add_node_prob,
                c_disjoint: self.c_disjoint,
                c_weight: self.c_weight,
            },
            compatibility_threshold: self.compatibility_threshold,
            elite_fraction: self.elite_fraction,
            survival_fraction: self.survival_fraction,
            crossover_prob: self.crossover_prob,
            stagnation_limit: self.stagnation_limit,
            seed: self.seed,
        }
    }

    pub fn pso(&self) -> PsoConfig {
        PsoConfig {
            particles: self.pso_particles,
            iterations: self.pso_iterations,
            inertia: self.pso_inertia,
            cognitive: self.pso_cognitive,
            social: self.pso_social,
            max_velocity_fraction: self.pso_max_velocity_fraction,
            seed: self.seed,
            ..PsoConfig::default()
        }
    }
}

fn validate_angles(name: &str, angles: &[f64]) -> Result<(), CliError> {
    match angles.iter().find(|a| !(**a > 0.0 && **a <= 180.0)) {
        Some(a) => Err(CliError::Config(format!("{name}: angle {a} outside (0, 180]"))),
        None => Ok(()),
    }
}

/// Parses `--angles`: a comma list (`30,60,90`), an inclusive range
/// `start:end:step`, or an empty string for no angles.
pub fn parse_angles(text: &str) -> Result<Vec<f64>, CliError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad angle value {s:?}")));
    let angles = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, end, step] = parts[..] else {
            return Err(CliError::Config(format!("angle range must be start:end:step, got {text:?}")));
        };
        let (start, end, step) = (num(start)?, num(end)?, num(step)?);
        if !(step > 0.0) || end < start {
            return Err(CliError::Config(format!("empty or invalid angle range {text:?}")));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    validate_angles("--angles", &angles)?;
    Ok(angles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse("populaton = 3\n").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("populaton"));
    }

    #[test]
    fn overrides_reach_core_configs() {
        let cfg = RunConfig::parse("population = 12\nseed = 9\nkp = 3.5\ntraining_angles = [10.0, 20.0]\n").unwrap();
        assert_eq!(cfg.evolution().population, 12);
        assert_eq!(cfg.evolution().seed, 9);
        assert_eq!(cfg.pso().seed, 9);
        assert_eq!(cfg.gains().kp, 3.5);
        assert_eq!(cfg.training_angles, vec![10.0, 20.0]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in
            ["population = 1", "sim_dt = 0.5", "training_angles = []", "test_angles = [0.0]", "thrust_to_weight = 0.5"]
        {
            let cfg = RunConfig::parse(text).unwrap();
            assert!(matches!(cfg.validate(), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::default();
        let b = RunConfig { out: PathBuf::from("elsewhere"), ..a.clone() };
        let c = RunConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn angle_lists_and_ranges() {
        assert_eq!(parse_angles("30, 60,90").unwrap(), vec![30.0, 60.0, 90.0]);
        assert_eq!(parse_angles("5:20:5").unwrap(), vec![5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_angles("1:180:1").unwrap().len(), 180);
        assert!(parse_angles("").unwrap().is_empty());
        assert!(parse_angles("0:10:5").is_err());
        assert!(parse_angles("10:5:1").is_err());
        assert!(parse_angles("a,b").is_err());
        assert!(parse_angles("1:2").is_err());
    }
}
