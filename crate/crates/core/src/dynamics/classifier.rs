//! Controllability labels over `(V1, parameter)` and a distance-weighted
//! k-nearest-neighbor classifier trained on them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{label_controllability, simulate_tracking, PdGains, UavSpec};
use crate::kinematics::{predict_collision, UavState};
use crate::maneuver::{decision_to_schedules, ManeuverDecision, Strategy, MAX_DELTA_V, MAX_PHI};
use crate::trajectory::fit_min_snap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("training set needs both labels, got only {0}")]
    SingleClass(bool),
    #[error("training set is empty")]
    Empty,
    #[error("sample strategy {found:?} does not match classifier strategy {expected:?}")]
    StrategyMismatch { expected: Strategy, found: Strategy },
    #[error("k must be positive")]
    ZeroK,
    #[error("dataset line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub strategy: Strategy,
    /// Pre-maneuver speed, m/s.
    pub v1: f64,
    /// Speed change in m/s (SC) or deviation angle in radians (DC).
    pub param: f64,
    pub controllable: bool,
}

/// How labeled samples are produced.
///
/// Each sample flies the maneuver in a head-on encounter detected at
/// `reference_range`; both vehicles must track it for a positive label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub v1_min: f64,
    pub v1_max: f64,
    pub reference_range: f64,
    pub t2_offset: f64,
    pub dt: f64,
    pub gains: PdGains,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            v1_min: 5.0,
            v1_max: 25.0,
            reference_range: 10.0,
            t2_offset: 0.1,
            dt: 0.01,
            gains: PdGains::default(),
            seed: 7,
        }
    }
}

fn parameter_max(strategy: Strategy) -> f64 {
    match strategy {
        Strategy::SpeedChange => MAX_DELTA_V,
        Strategy::DirectionChange => MAX_PHI,
    }
}

/// Simulates one `(V1, parameter)` pair in the reference encounter.
pub fn label_sample(strategy: Strategy, v1: f64, param: f64, cfg: &DatasetConfig, spec: &UavSpec) -> bool {
    let half = cfg.reference_range / 2.0;
    let a = UavState::from_xy(-half, 0.0, v1, 0.0);
    let b = UavState::from_xy(half, 0.0, -v1, 0.0);
    let pred = predict_collision(&a, &b, spec.d_col(), 0.0, f64::MAX);
    let (dv, phi) = match strategy {
        Strategy::SpeedChange => (param, 0.0),
        Strategy::DirectionChange => (0.0, param),
    };
    let run = || -> Option<bool> {
        let decision = ManeuverDecision::new(strategy, dv, phi, cfg.t2_offset).ok()?;
        let (sa, sb) = decision_to_schedules(&decision, &a, &b, &pred).ok()?;
        let ok = |s| {
            let spline = fit_min_snap(s).ok()?;
            let trace = simulate_tracking(&spline, spec, &cfg.gains, cfg.dt).ok()?;
            Some(label_controllability(&trace, spec))
        };
        Some(ok(&sa)? && ok(&sb)?)
    };
    run().unwrap_or(false)
}

/// `n` samples drawn uniformly over the speed range and the strategy's
/// parameter box, labeled by simulation. Sample `i` uses its own RNG stream,
/// so the result does not depend on thread scheduling.
pub fn generate_classifier_dataset(
    strategy: Strategy,
    n: usize,
    cfg: &DatasetConfig,
    spec: &UavSpec,
) -> Vec<LabeledSample> {
    let tag = match strategy {
        Strategy::SpeedChange => 0x5c,
        Strategy::DirectionChange => 0xdc,
    };
    let pmax = parameter_max(strategy);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ tag);
            rng.set_stream(i as u64);
            let v1 = rng.random_range(cfg.v1_min..=cfg.v1_max);
            let param = rng.random_range(0.0..=pmax);
            LabeledSample { strategy, v1, param, controllable: label_sample(strategy, v1, param, cfg, spec) }
        })
        .collect()
}

/// Writes samples as `strategy,v1,param,label` rows under a column header.
pub fn write_dataset(samples: &[LabeledSample]) -> String {
    let mut out = String::from("strategy,v1,param,label\n");
    for s in samples {
        out.push_str(&format!("{},{},{},{}\n", s.strategy.label(), s.v1, s.param, u8::from(s.controllable)));
    }
    out
}

/// Parses [`write_dataset`] output; lines starting with `#` are skipped.
pub fn read_dataset(text: &str) -> Result<Vec<LabeledSample>, ClassifierError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("strategy,") {
            continue;
        }
        let err = |msg: &str| ClassifierError::Parse { line: i + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err("expected 4 fields"));
        }
        let strategy = Strategy::from_label(f[0]).ok_or_else(|| err("unknown strategy"))?;
        let v1 = f[1].parse().map_err(|_| err("bad v1"))?;
        let param = f[2].parse().map_err(|_| err("bad param"))?;
        let controllable = match f[3] {
            "1" => true,
            "0" => false,
            _ => return Err(err("label must be 0 or 1")),
        };
        out.push(LabeledSample { strategy, v1, param, controllable });
    }
    Ok(out)
}

/// Lazy model: the canonically ordered training set plus feature scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureClassifier {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
    samples: Vec<LabeledSample>,
    mean: [f64; 2],
    std: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub strategy: Strategy,
    pub samples: usize,
    pub controllable: usize,
    pub folds: usize,
    pub misclassification: f64,
}

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_FOLDS: usize = 10;

fn canonical(mut samples: Vec<LabeledSample>) -> Vec<LabeledSample> {
    samples.sort_by(|a, b| {
        a.v1.total_cmp(&b.v1).then(a.param.total_cmp(&b.param)).then(a.controllable.cmp(&b.controllable))
    });
    samples
}

impl FailureClassifier {
    pub fn train(strategy: Strategy, samples: &[LabeledSample], k: usize, seed: u64) -> Result<Self, ClassifierError> {
        if k == 0 {
            return Err(ClassifierError::ZeroK);
        }
        let first = samples.first().ok_or(ClassifierError::Empty)?;
        if let Some(s) = samples.iter().find(|s| s.strategy != strategy) {
            return Err(ClassifierError::StrategyMismatch { expected: strategy, found: s.strategy });
        }
        if samples.iter().all(|s| s.controllable == first.controllable) {
            return Err(ClassifierError::SingleClass(first.controllable));
        }
        let samples = canonical(samples.to_vec());
        let n = samples.len() as f64;
        let feats = |s: &LabeledSample| [s.v1, s.param];
        let mut mean = [0.0; 2];
        let mut std = [0.0; 2];
        for d in 0..2 {
            mean[d] = samples.iter().map(|s| feats(s)[d]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (feats(s)[d] - mean[d]).powi(2)).sum::<f64>() / n;
            std[d] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { strategy, k, seed, samples, mean, std })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    /// True when the maneuver is predicted to be controllable.
    pub fn classify(&self, v1: f64, param: f64) -> bool {
        let z = |v: f64, d: usize| (v - self.mean[d]) / self.std[d];
        let q = [z(v1, 0), z(param, 1)];
        let mut nearest: Vec<(f64, usize)> = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| ((z(s.v1, 0) - q[0]).hypot(z(s.param, 1) - q[1]), i))
            .collect();
        let k = self.k.min(nearest.len());
        nearest.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (mut yes, mut no) = (0.0, 0.0);
        for &(d, i) in &nearest[..k] {
            let w = 1.0 / d.max(1e-12);
            if self.samples[i].controllable {
                yes += w;
            } else {
                no += w;
            }
        }
        yes >= no
    }

    /// k-fold cross-validated misclassification rate. Folds come from a
    /// seeded shuffle of the canonical sample order; folds whose training
    /// part is single-class predict that class.
    pub fn cross_validate(&self, folds: usize) -> f64 {
        let n = self.samples.len();
        let folds = folds.clamp(2, n.max(2));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let mut wrong = 0usize;
        for f in 0..folds {
            let held: Vec<usize> = order.iter().enumerate().filter(|(p, _)| p % folds == f).map(|(_, &i)| i).collect();
            let train: Vec<LabeledSample> =
                order.iter().enumerate().filter(|(p, _)| p % folds != f).map(|(_, &i)| self.samples[i]).collect();
            let model = Self::train(self.strategy, &train, self.k, self.seed);
            for &i in &held {
                let s = &self.samples[i];
                let pred = match &model {
                    Ok(m) => m.classify(s.v1, s.param),
                    Err(_) => train.first().is_some_and(|t| t.controllable),
                };
                wrong += usize::from(pred != s.controllable);
            }
        }
        wrong as f64 / n as f64
    }

    pub fn report(&self, folds: usize) -> ClassifierReport {
        ClassifierReport {
            strategy: self.strategy,
            samples: self.samples.len(),
            controllable: self.samples.iter().filter(|s| s.controllable).count(),
            folds,
            misclassification: self.cross_validate(folds),
        }
    }
}

/// One classifier per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSet {
    pub speed_change: FailureClassifier,
    pub direction_change: FailureClassifier,
}

impl ClassifierSet {
    /// Generates both datasets and trains the pair.
    pub fn build(n: usize, cfg: &DatasetConfig, spec: &UavSpec) -> Result<Self, ClassifierError> {
        let sc = generate_classifier_dataset(Strategy::SpeedChange, n, cfg, spec);
        let dc = generate_classifier_dataset(Strategy::DirectionChange, n, cfg, spec);
        Self::from_samples(&sc, &dc, cfg.seed)
    }

    pub fn from_samples(sc: &[LabeledSample], dc: &[LabeledSample], seed: u64) -> Result<Self, ClassifierError> {
        Ok(Self {
            speed_change: FailureClassifier::train(Strategy::SpeedChange, sc, DEFAULT_K, seed)?,
            direction_change: FailureClassifier::train(Strategy::DirectionChange, dc, DEFAULT_K, seed)?,
        })
    }

    pub fn get(&self, strategy: Strategy) -> &FailureClassifier {
        match strategy {
            Strategy::SpeedChange => &self.speed_change,
            Strategy::DirectionChange => &self.direction_change,
        }
    }

    pub fn allows(&self, decision: &ManeuverDecision, v1: f64) -> bool {
        self.get(decision.strategy).classify(v1, decision.parameter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..n)
            .map(|_| {
                let v1: f64 = rng.random_range(5.0..25.0);
                let param: f64 = rng.random_range(0.0..5.0);
                LabeledSample { strategy: Strategy::SpeedChange, v1, param, controllable: v1 + 4.0 * param < 25.0 }
            })
            .collect()
    }

    #[test]
    fn separable_set_has_zero_cv_error() {
        // a margin around the boundary keeps every fold separable
        let data: Vec<_> = synthetic(600).into_iter().filter(|s| (s.v1 + 4.0 * s.param - 25.0).abs() > 2.0).collect();
        let c = FailureClassifier::train(Strategy::SpeedChange, &data, DEFAULT_K, 1).unwrap();
        assert_eq!(c.cross_validate(10), 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let data: Vec<_> = synthetic(50).into_iter().map(|s| LabeledSample { controllable: true, ..s }).collect();
        assert_eq!(
            FailureClassifier::train(Strategy::SpeedChange, &data, 5, 1),
            Err(ClassifierError::SingleClass(true))
        );
        assert_eq!(FailureClassifier::train(Strategy::SpeedChange, &[], 5, 1), Err(ClassifierError::Empty));
    }

    #[test]
    fn classify_ignores_training_order() {
        let data = synthetic(300);
        let mut rev = data.clone();
        rev.reverse();
        let a = FailureClassifier::train(Strategy::SpeedChange, &data, DEFAULT_K, 9).unwrap();
        let b = FailureClassifier::train(Strategy::SpeedChange, &rev, DEFAULT_K, 9).unwrap();
        assert_eq!(a, b);
        for i in 0..200 {
            let (v, p) = (5.0 + 0.1 * i as f64, (i % 50) as f64 * 0.1);
            assert_eq!(a.classify(v, p), b.classify(v, p));
        }
        assert_eq!(a.cross_validate(10), b.cross_validate(10));
    }

    #[test]
    fn dataset_round_trips_through_text() {
        let data = synthetic(20);
        let text = write_dataset(&data);
        assert_eq!(read_dataset(&format!("# header\n{text}")).unwrap(), data);
        assert!(matches!(read_dataset("SC,1,2\n"), Err(ClassifierError::Parse { line: 1, .. })));
    }

    #[test]
    fn null_maneuvers_are_controllable() {
        let cfg = DatasetConfig::default();
        let spec = UavSpec::default();
        for strategy in [Strategy::SpeedChange, Strategy::DirectionChange] {
            for v1 in [5.0, 12.0, 16.67, 25.0] {
                assert!(label_sample(strategy, v1, 0.0, &cfg, &spec), "{strategy:?} {v1}");
            }
        }
    }

    #[test]
    fn generation_is_reproducible_and_mixed() {
        let cfg = DatasetConfig::default();
        let spec = UavSpec::default();
        let a = generate_classifier_dataset(Strategy::DirectionChange, 120, &cfg, &spec);
        let b = generate_classifier_dataset(Strategy::DirectionChange, 120, &cfg, &spec);
        assert_eq!(a, b);
        let yes = a.iter().filter(|s| s.controllable).count();
        assert!(yes > 0 && yes < a.len());
        assert!(a.iter().all(|s| (5.0..=25.0).contains(&s.v1) && (0.0..=MAX_PHI).contains(&s.param)));
    }
}
