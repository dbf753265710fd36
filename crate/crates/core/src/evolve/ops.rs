//! Mutation, crossover, compatibility distance and speciation.

use std::collections::{HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::network::{Activation, ConnectionGene, Genome, NodeGene, NodeKind, FIRST_HIDDEN_ID, INPUTS, OUTPUTS};

/// Attempts at finding a valid new connection before giving up.
const ADD_CONNECTION_ATTEMPTS: usize = 10;

/// Mutation and speciation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    /// Per connection (and per non-input bias).
    pub weight_perturb_prob: f64,
    pub weight_sigma: f64,
    /// Chance that a perturbed weight is redrawn instead of nudged.
    pub weight_replace_prob: f64,
    pub add_connection_prob: f64,
    pub add_node_prob: f64,
    pub c_disjoint: f64,
    pub c_weight: f64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self {
            weight_perturb_prob: 0.8,
            weight_sigma: 0.5,
            weight_replace_prob: 0.1,
            add_connection_prob: 0.05,
            add_node_prob: 0.03,
            c_disjoint: 1.0,
            c_weight: 0.4,
        }
    }
}

/// Run-wide structural bookkeeping: the same new connection or the same
/// split always receives the same ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationRegistry {
    next_innovation: u32,
    next_node: u32,
    connections: HashMap<(u32, u32), u32>,
    splits: HashMap<u32, u32>,
}

impl Default for InnovationRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl InnovationRegistry {
    /// Starts after the fully connected seed topology.
    pub fn new() -> Self {
        let mut connections = HashMap::new();
        for i in 0..INPUTS {
            for o in 0..OUTPUTS {
                connections.insert((i as u32, (INPUTS + o) as u32), (i * OUTPUTS + o) as u32);
            }
        }
        Self {
            next_innovation: (INPUTS * OUTPUTS) as u32,
            next_node: FIRST_HIDDEN_ID,
            connections,
            splits: HashMap::new(),
        }
    }

    pub fn connection(&mut self, from: u32, to: u32) -> u32 {
        *self.connections.entry((from, to)).or_insert_with(|| {
            self.next_innovation += 1;
            self.next_innovation - 1
        })
    }

    /// Node id for splitting connection `innovation`; fresh when `taken`.
    pub fn split_node(&mut self, innovation: u32, taken: impl Fn(u32) -> bool) -> u32 {
        if let Some(&id) = self.splits.get(&innovation) {
            if !taken(id) {
                return id;
            }
            return self.fresh_node();
        }
        let id = self.fresh_node();
        self.splits.insert(innovation, id);
        id
    }

    fn fresh_node(&mut self) -> u32 {
        self.next_node += 1;
        self.next_node - 1
    }
}

fn creates_cycle(g: &Genome, from: u32, to: u32) -> bool {
    // a path to -> ... -> from over enabled connections
    if from == to {
        return true;
    }
    let mut stack = vec![to];
    let mut seen = HashSet::new();
    while let Some(n) = stack.pop() {
        if n == from {
            return true;
        }
        if seen.insert(n) {
            stack.extend(g.enabled_connections().filter(|c| c.from == n).map(|c| c.to));
        }
    }
    false
}

fn insert_sorted(g: &mut Genome, c: ConnectionGene) {
    let pos = g.connections.partition_point(|x| x.innovation < c.innovation);
    g.connections.insert(pos, c);
}

/// Nudges every weight and bias with probability `weight_perturb_prob`.
pub fn mutate_weights(g: &mut Genome, cfg: &MutationConfig, rng: &mut impl Rng) {
    let nudge = Normal::new(0.0, cfg.weight_sigma).expect("sigma is finite");
    let fresh = Normal::new(0.0, 1.0).expect("unit normal");
    let step = |w: &mut f64, rng: &mut dyn rand::RngCore| {
        if rng.random::<f64>() < cfg.weight_perturb_prob {
            if rng.random::<f64>() < cfg.weight_replace_prob {
                *w = fresh.sample(rng);
            } else {
                *w += nudge.sample(rng);
            }
        }
    };
    for c in &mut g.connections {
        step(&mut c.weight, rng);
    }
    for n in g.nodes.iter_mut().filter(|n| n.kind != NodeKind::Input) {
        step(&mut n.bias, rng);
    }
}

/// Adds one feed-forward connection between unconnected nodes. Returns
/// whether a connection was added.
pub fn add_connection(g: &mut Genome, registry: &mut InnovationRegistry, rng: &mut impl Rng) -> bool {
    let sources: Vec<u32> = g.nodes.iter().filter(|n| n.kind != NodeKind::Output).map(|n| n.id).collect();
    let targets: Vec<u32> = g.nodes.iter().filter(|n| n.kind != NodeKind::Input).map(|n| n.id).collect();
    for _ in 0..ADD_CONNECTION_ATTEMPTS {
        let (&from, &to) = (sources.choose(rng).expect("inputs exist"), targets.choose(rng).expect("outputs exist"));
        if g.connections.iter().any(|c| c.from == from && c.to == to) || creates_cycle(g, from, to) {
            continue;
        }
        let innovation = registry.connection(from, to);
        let weight = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        insert_sorted(g, ConnectionGene { innovation, from, to, weight, enabled: true });
        return true;
    }
    false
}

/// Splits a random enabled connection `a -> b` into `a -> n -> b`: the old
/// gene is disabled, the incoming weight is 1 and the outgoing weight keeps
/// the old value.
pub fn add_node(g: &mut Genome, registry: &mut InnovationRegistry, rng: &mut impl Rng) -> bool {
    let enabled: Vec<usize> = (0..g.connections.len()).filter(|&i| g.connections[i].enabled).collect();
    let Some(&idx) = enabled.choose(rng) else {
        return false;
    };
    let old = g.connections[idx];
    let ids: HashSet<u32> = g.nodes.iter().map(|n| n.id).collect();
    let node = registry.split_node(old.innovation, |id| ids.contains(&id));
    g.connections[idx].enabled = false;
    g.nodes.push(NodeGene { id: node, kind: NodeKind::Hidden, activation: Activation::Tanh, bias: 0.0 });
    let inn_in = registry.connection(old.from, node);
    let inn_out = registry.connection(node, old.to);
    insert_sorted(g, ConnectionGene { innovation: inn_in, from: old.from, to: node, weight: 1.0, enabled: true });
    insert_sorted(g, ConnectionGene { innovation: inn_out, from: node, to: old.to, weight: old.weight, enabled: true });
    true
}

/// Weight perturbation followed by the two structural mutations.
pub fn mutate(g: &Genome, cfg: &MutationConfig, registry: &mut InnovationRegistry, rng: &mut impl Rng) -> Genome {
    let mut child = g.clone();
    child.fitness = None;
    mutate_weights(&mut child, cfg, rng);
    if rng.random::<f64>() < cfg.add_connection_prob {
        add_connection(&mut child, registry, rng);
    }
    if rng.random::<f64>() < cfg.add_node_prob {
        add_node(&mut child, registry, rng);
    }
    child
}

/// Innovation-aligned crossover with `fitter` as the primary parent:
/// matching genes take either parent's weight at random, disjoint and excess
/// genes come from `fitter`. A gene disabled in exactly one parent stays
/// disabled with probability 3/4. Re-enabled genes that would close a cycle
/// are disabled again.
pub fn crossover(fitter: &Genome, other: &Genome, rng: &mut impl Rng) -> Genome {
    let theirs: HashMap<u32, &ConnectionGene> = other.connections.iter().map(|c| (c.innovation, c)).collect();
    let mut child = Genome { nodes: Vec::new(), connections: Vec::new(), fitness: None };
    let other_nodes: HashMap<u32, &NodeGene> = other.nodes.iter().map(|n| (n.id, n)).collect();
    for n in &fitter.nodes {
        let mut gene = *n;
        if let Some(o) = other_nodes.get(&n.id) {
            if rng.random::<bool>() {
                gene.bias = o.bias;
            }
        }
        child.nodes.push(gene);
    }
    for c in &fitter.connections {
        let mut gene = *c;
        if let Some(o) = theirs.get(&c.innovation) {
            if rng.random::<bool>() {
                gene.weight = o.weight;
            }
            gene.enabled = match (c.enabled, o.enabled) {
                (true, true) => true,
                (false, false) => false,
                _ => rng.random::<f64>() >= 0.75,
            };
        }
        child.connections.push(gene);
    }
    for i in 0..child.connections.len() {
        let c = child.connections[i];
        if c.enabled && !fitter.connections[i].enabled {
            child.connections[i].enabled = false;
            if !creates_cycle(&child, c.from, c.to) {
                child.connections[i].enabled = true;
            }
        }
    }
    child
}

/// `c_disjoint (D + E) / N + c_weight W`, with `N` the larger gene count
/// (1 below 20 genes) and `W` the mean weight difference of matching genes.
pub fn compatibility(a: &Genome, b: &Genome, cfg: &MutationConfig) -> f64 {
    let theirs: HashMap<u32, f64> = b.connections.iter().map(|c| (c.innovation, c.weight)).collect();
    let mut matching = 0usize;
    let mut weight_diff = 0.0;
    for c in &a.connections {
        if let Some(w) = theirs.get(&c.innovation) {
            matching += 1;
            weight_diff += (c.weight - w).abs();
        }
    }
    let mismatched = a.connections.len() + b.connections.len() - 2 * matching;
    let larger = a.connections.len().max(b.connections.len());
    let n = if larger < 20 { 1.0 } else { larger as f64 };
    let w = if matching > 0 { weight_diff / matching as f64 } else { 0.0 };
    cfg.c_disjoint * mismatched as f64 / n + cfg.c_weight * w
}

/// Greedy partition: each genome joins the first species whose
/// representative is within `threshold`, otherwise founds a new one.
/// `representatives` seeds the species list (possibly empty); returns member
/// indices per species, empty species dropped, with each species'
/// representative index taken from `representatives` order first.
pub fn speciate_with(
    population: &[Genome],
    representatives: &[Genome],
    threshold: f64,
    cfg: &MutationConfig,
) -> Vec<(Genome, Vec<usize>)> {
    let mut species: Vec<(Genome, Vec<usize>)> = representatives.iter().map(|r| (r.clone(), Vec::new())).collect();
    for (i, g) in population.iter().enumerate() {
        match species.iter_mut().find(|(rep, _)| compatibility(g, rep, cfg) <= threshold) {
            Some((_, members)) => members.push(i),
            None => species.push((g.clone(), vec![i])),
        }
    }
    species.retain(|(_, m)| !m.is_empty());
    species
}

/// Partition of `population` into species by compatibility threshold.
pub fn speciate(population: &[Genome], threshold: f64, cfg: &MutationConfig) -> Vec<Vec<usize>> {
    speciate_with(population, &[], threshold, cfg).into_iter().map(|(_, m)| m).collect()
}
