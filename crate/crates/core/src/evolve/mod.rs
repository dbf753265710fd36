//! Speciated topology-and-weight neuroevolution of the maneuver network.
//!
//! Fitness is the worst-case detection range over a set of approach angles
//! (lower is better). Each generation is evaluated concurrently, then
//! speciated, fitness-shared and reproduced on a single thread. Every child
//! draws from its own RNG stream derived from the master seed, generation and
//! slot, so a run is reproducible bit for bit.

mod network;
mod ops;

pub use network::{
    encode_inputs, input_id, output_id, Activation, ConnectionGene, Genome, GenomeError, InputEncoding, NodeGene,
    NodeKind, FIRST_HIDDEN_ID, GENOME_FORMAT_VERSION, INPUTS, OUTPUTS,
};
pub use ops::{
    add_connection, add_node, compatibility, crossover, mutate, mutate_weights, speciate, speciate_with,
    InnovationRegistry, MutationConfig,
};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::search::{Evaluator, INFEASIBLE_RANGE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation: MutationConfig,
    pub compatibility_threshold: f64,
    /// Share of each species copied unchanged (at least one per species).
    pub elite_fraction: f64,
    /// Share of each species, best first, eligible as parents.
    pub survival_fraction: f64,
    pub crossover_prob: f64,
    /// Generations without improvement before a species stops reproducing.
    pub stagnation_limit: usize,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 30,
            mutation: MutationConfig::default(),
            compatibility_threshold: 1.0,
            elite_fraction: 0.1,
            survival_fraction: 0.5,
            crossover_prob: 0.75,
            stagnation_limit: 5,
            seed: 1,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.population < 2 {
            return Err(format!("population must be at least 2, got {}", self.population));
        }
        let m = &self.mutation;
        let rates = [
            ("elite_fraction", self.elite_fraction),
            ("survival_fraction", self.survival_fraction),
            ("crossover_prob", self.crossover_prob),
            ("weight_perturb_prob", m.weight_perturb_prob),
            ("weight_replace_prob", m.weight_replace_prob),
            ("add_connection_prob", m.add_connection_prob),
            ("add_node_prob", m.add_node_prob),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(m.weight_sigma.is_finite() && m.weight_sigma > 0.0) {
            return Err(format!("weight_sigma must be positive, got {}", m.weight_sigma));
        }
        if self.compatibility_threshold.is_nan() || self.compatibility_threshold < 0.0 {
            return Err(format!("compatibility_threshold must be non-negative, got {}", self.compatibility_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub best_ever: f64,
    pub species: usize,
    /// Genomes with a finite worst-case range.
    pub feasible: usize,
    pub best_hidden_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub champion: Genome,
    pub history: Vec<GenerationStats>,
}

struct Species {
    representative: Genome,
    best: f64,
    stagnant: usize,
}

fn child_rng(seed: u64, generation: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | slot as u64);
    rng
}

/// Initial population: fully connected networks with unit-normal weights.
pub fn initial_population(cfg: &EvolutionConfig) -> Vec<Genome> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..cfg.population)
        .map(|i| {
            let mut rng = child_rng(cfg.seed, 0, i);
            Genome::fully_connected(|_| normal.sample(&mut rng))
        })
        .collect()
}

/// Scores every genome lacking a fitness concurrently.
pub fn evaluate_population(population: &mut [Genome], evaluator: &Evaluator, angles: &[f64]) {
    population.par_iter_mut().filter(|g| g.fitness.is_none()).for_each(|g| {
        let r = evaluator.worst_case_range(&*g, angles).r_min;
        g.fitness = Some(r);
    });
}

fn fitness(g: &Genome) -> f64 {
    g.fitness.unwrap_or(INFEASIBLE_RANGE)
}

/// Largest-remainder split of `total` slots proportional to `weights`.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if !(sum > 0.0) {
        let mut out = vec![total / weights.len(); weights.len()];
        for slot in out.iter_mut().take(total % weights.len()) {
            *slot += 1;
        }
        return out;
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..weights.len()).collect();
    rest.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = total - out.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        out[i] += 1;
    }
    out
}

/// Runs the generational loop and returns the best genome ever evaluated.
///
/// `on_generation` sees each generation's statistics as soon as they exist.
pub fn evolve(
    cfg: &EvolutionConfig,
    evaluator: &Evaluator,
    angles: &[f64],
    mut on_generation: impl FnMut(&GenerationStats),
) -> EvolutionResult {
    let mut registry = InnovationRegistry::new();
    let mut population = initial_population(cfg);
    let mut species: Vec<Species> = Vec::new();
    let mut champion: Option<Genome> = None;
    let mut history = Vec::with_capacity(cfg.generations);

    for generation in 0..cfg.generations.max(1) {
        evaluate_population(&mut population, evaluator, angles);

        let (best_idx, best) = population
            .iter()
            .enumerate()
            .map(|(i, g)| (i, fitness(g)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("population is not empty");
        if champion.as_ref().is_none_or(|c| best < fitness(c)) {
            champion = Some(population[best_idx].clone());
        }
        let champ = champion.as_ref().expect("set above");

        let reps: Vec<Genome> = species.iter().map(|s| s.representative.clone()).collect();
        let partition = speciate_with(&population, &reps, cfg.compatibility_threshold, &cfg.mutation);
        species = partition
            .iter()
            .map(|(rep, members)| {
                let best = members.iter().map(|&i| fitness(&population[i])).fold(f64::INFINITY, f64::min);
                let prior = species.iter().find(|s| &s.representative == rep);
                match prior {
                    Some(p) if best >= p.best => {
                        Species { representative: rep.clone(), best: p.best, stagnant: p.stagnant + 1 }
                    }
                    _ => Species { representative: rep.clone(), best, stagnant: 0 },
                }
            })
            .collect();

        let stats = GenerationStats {
            generation,
            best,
            mean: population.iter().map(fitness).sum::<f64>() / population.len() as f64,
            best_ever: fitness(champ),
            species: partition.len(),
            feasible: population.iter().filter(|g| fitness(g) < INFEASIBLE_RANGE).count(),
            best_hidden_nodes: population[best_idx].hidden_count(),
        };
        on_generation(&stats);
        history.push(stats);
        if generation + 1 >= cfg.generations {
            break;
        }

        population = reproduce(cfg, generation, &population, &partition, &mut species, champ, &mut registry);
    }
    EvolutionResult { champion: champion.expect("at least one generation"), history }
}

fn reproduce(
    cfg: &EvolutionConfig,
    generation: usize,
    population: &[Genome],
    partition: &[(Genome, Vec<usize>)],
    species: &mut [Species],
    champion: &Genome,
    registry: &mut InnovationRegistry,
) -> Vec<Genome> {
    let score = |g: &Genome| INFEASIBLE_RANGE + 1.0 - fitness(g);
    let champ_species =
        partition.iter().position(|(_, m)| m.iter().any(|&i| population[i] == *champion)).unwrap_or(usize::MAX);
    let mut weights: Vec<f64> = partition
        .iter()
        .enumerate()
        .map(|(s, (_, members))| {
            if species[s].stagnant >= cfg.stagnation_limit && s != champ_species {
                return 0.0;
            }
            members.iter().map(|&i| score(&population[i])).sum::<f64>() / members.len() as f64
        })
        .collect();
    if weights.iter().all(|w| *w == 0.0) {
        let best = (0..partition.len())
            .min_by(|&a, &b| species[a].best.total_cmp(&species[b].best))
            .expect("at least one species");
        weights[best] = 1.0;
    }

    let mut next = vec![champion.clone()];
    let quotas = apportion(&weights, cfg.population - 1);
    for ((_, members), quota) in partition.iter().zip(quotas) {
        if quota == 0 {
            continue;
        }
        let mut ranked = members.clone();
        ranked.sort_by(|&a, &b| fitness(&population[a]).total_cmp(&fitness(&population[b])).then(a.cmp(&b)));
        let elites = ((cfg.elite_fraction * ranked.len() as f64).floor() as usize).max(1).min(quota);
        for &i in ranked.iter().take(elites) {
            next.push(population[i].clone());
        }
        let pool_len = ((cfg.survival_fraction * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
        let pool = &ranked[..pool_len];
        for _ in elites..quota {
            let mut rng = child_rng(cfg.seed, generation + 1, next.len());
            let &p1 = pool.choose(&mut rng).expect("pool is not empty");
            let base = if pool.len() >= 2 && rng.random::<f64>() < cfg.crossover_prob {
                let &p2 = pool.choose(&mut rng).expect("pool is not empty");
                let (a, b) = if fitness(&population[p2]) < fitness(&population[p1]) { (p2, p1) } else { (p1, p2) };
                crossover(&population[a], &population[b], &mut rng)
            } else {
                population[p1].clone()
            };
            next.push(mutate(&base, &cfg.mutation, registry, &mut rng));
        }
    }
    next
}
