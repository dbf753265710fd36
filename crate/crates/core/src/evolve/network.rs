//! Feed-forward genome, its forward pass and the own-frame input encoding.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{rotate, UavState};
use crate::maneuver::{MAX_DELTA_V, MAX_PHI};
use crate::search::{ManeuverPolicy, PolicyError, RawDecision};

pub const INPUTS: usize = 4;
pub const OUTPUTS: usize = 3;
/// Version written into genome files.
pub const GENOME_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenomeError {
    #[error("genome contains a cycle")]
    Cyclic,
    #[error("connection {innovation} references unknown node {node}")]
    DanglingConnection { innovation: u32, node: u32 },
    #[error("expected {INPUTS} inputs and {OUTPUTS} outputs, found {0} and {1}")]
    Interface(usize, usize),
    #[error("duplicate node id {0}")]
    DuplicateNode(u32),
    #[error("connection {0} targets an input node")]
    IntoInput(u32),
    #[error("own speed is zero; the body frame is undefined")]
    ZeroSpeed,
    #[error("genome file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Input,
    Output,
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub id: u32,
    pub kind: NodeKind,
    pub activation: Activation,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionGene {
    pub innovation: u32,
    pub from: u32,
    pub to: u32,
    pub weight: f64,
    pub enabled: bool,
}

/// Evolvable network. Node ids `0..4` are the inputs and `4..7` the
/// outputs; connections are kept sorted by innovation id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub nodes: Vec<NodeGene>,
    pub connections: Vec<ConnectionGene>,
    /// Worst-case detection range in m, lower is better.
    pub fitness: Option<f64>,
}

pub fn input_id(i: usize) -> u32 {
    i as u32
}

pub fn output_id(i: usize) -> u32 {
    (INPUTS + i) as u32
}

/// First id available to hidden nodes.
pub const FIRST_HIDDEN_ID: u32 = (INPUTS + OUTPUTS) as u32;

impl Genome {
    /// Inputs and outputs only, no connections.
    pub fn empty() -> Self {
        let mut nodes = Vec::with_capacity(INPUTS + OUTPUTS);
        for i in 0..INPUTS {
            nodes.push(NodeGene {
                id: input_id(i),
                kind: NodeKind::Input,
                activation: Activation::Identity,
                bias: 0.0,
            });
        }
        for i in 0..OUTPUTS {
            nodes.push(NodeGene {
                id: output_id(i),
                kind: NodeKind::Output,
                activation: Activation::Sigmoid,
                bias: 0.0,
            });
        }
        Self { nodes, connections: Vec::new(), fitness: None }
    }

    /// Every input wired to every output; innovation `i * OUTPUTS + o`.
    pub fn fully_connected(weights: impl FnMut(usize) -> f64) -> Self {
        let mut g = Self::empty();
        let mut weights = weights;
        for i in 0..INPUTS {
            for o in 0..OUTPUTS {
                let innovation = (i * OUTPUTS + o) as u32;
                g.connections.push(ConnectionGene {
                    innovation,
                    from: input_id(i),
                    to: output_id(o),
                    weight: weights(innovation as usize),
                    enabled: true,
                });
            }
        }
        g
    }

    pub fn node(&self, id: u32) -> Option<&NodeGene> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn hidden_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Hidden).count()
    }

    pub fn enabled_connections(&self) -> impl Iterator<Item = &ConnectionGene> {
        self.connections.iter().filter(|c| c.enabled)
    }

    /// Checks ids, interface size and acyclicity.
    pub fn validate(&self) -> Result<(), GenomeError> {
        let mut seen = HashMap::new();
        for n in &self.nodes {
            if seen.insert(n.id, n.kind).is_some() {
                return Err(GenomeError::DuplicateNode(n.id));
            }
        }
        let inputs = self.nodes.iter().filter(|n| n.kind == NodeKind::Input).count();
        let outputs = self.nodes.iter().filter(|n| n.kind == NodeKind::Output).count();
        let ids_ok = (0..INPUTS).all(|i| seen.get(&input_id(i)) == Some(&NodeKind::Input))
            && (0..OUTPUTS).all(|o| seen.get(&output_id(o)) == Some(&NodeKind::Output));
        if inputs != INPUTS || outputs != OUTPUTS || !ids_ok {
            return Err(GenomeError::Interface(inputs, outputs));
        }
        for c in &self.connections {
            for node in [c.from, c.to] {
                if !seen.contains_key(&node) {
                    return Err(GenomeError::DanglingConnection { innovation: c.innovation, node });
                }
            }
            if seen[&c.to] == NodeKind::Input {
                return Err(GenomeError::IntoInput(c.innovation));
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Node ids in evaluation order over the enabled connections.
    pub fn topological_order(&self) -> Result<Vec<u32>, GenomeError> {
        let index: HashMap<u32, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for c in self.enabled_connections() {
            let (Some(&f), Some(&t)) = (index.get(&c.from), index.get(&c.to)) else {
                return Err(GenomeError::DanglingConnection { innovation: c.innovation, node: c.from.max(c.to) });
            };
            out[f].push(t);
            indegree[t] += 1;
        }
        // ready nodes are taken in node-list order for a stable result
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop() {
            order.push(self.nodes[i].id);
            for &t in out[i].iter().rev() {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.push(t);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(GenomeError::Cyclic);
        }
        Ok(order)
    }

    /// Raw output activations, each in `(0, 1)`.
    pub fn activate(&self, inputs: &[f64; INPUTS]) -> Result<[f64; OUTPUTS], GenomeError> {
        let order = self.topological_order()?;
        let mut value: HashMap<u32, f64> = HashMap::with_capacity(self.nodes.len());
        let mut incoming: HashMap<u32, Vec<&ConnectionGene>> = HashMap::new();
        for c in self.enabled_connections() {
            incoming.entry(c.to).or_default().push(c);
        }
        for id in order {
            let node = self.node(id).expect("ordered ids come from the node list");
            let v = if node.kind == NodeKind::Input {
                inputs[id as usize]
            } else {
                let sum = node.bias
                    + incoming.get(&id).map_or(0.0, |cs| cs.iter().map(|c| c.weight * value[&c.from]).sum::<f64>());
                node.activation.apply(sum)
            };
            value.insert(id, v);
        }
        Ok(std::array::from_fn(|o| value[&output_id(o)]))
    }

    /// Scaled outputs `(delta_v, phi, s)`.
    pub fn forward(&self, inputs: &[f64; INPUTS]) -> Result<RawDecision, GenomeError> {
        let [dv, phi, s] = self.activate(inputs)?;
        Ok(RawDecision { delta_v: dv * MAX_DELTA_V, phi: phi * MAX_PHI, s })
    }

    pub fn to_json(&self) -> String {
        let file = GenomeFile { version: GENOME_FORMAT_VERSION, genome: self.clone() };
        serde_json::to_string_pretty(&file).expect("genome serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GenomeError> {
        let file: GenomeFile = serde_json::from_str(text).map_err(|e| GenomeError::Format(e.to_string()))?;
        if file.version != GENOME_FORMAT_VERSION {
            return Err(GenomeError::Format(format!("unsupported version {}", file.version)));
        }
        file.genome.validate()?;
        Ok(file.genome)
    }
}

#[derive(Serialize, Deserialize)]
struct GenomeFile {
    version: u32,
    genome: Genome,
}

/// Normalizers for the own-frame relative state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputEncoding {
    /// m
    pub position_scale: f64,
    /// m/s
    pub velocity_scale: f64,
}

impl Default for InputEncoding {
    /// Twice the largest closing speed of two cruising vehicles, so a
    /// head-on pair encodes its relative velocity as -0.5.
    fn default() -> Self {
        Self { position_scale: 200.0, velocity_scale: 4.0 * 16.67 }
    }
}

/// Intruder position and velocity relative to the ownship, in the frame
/// where the ownship flies along +x, scaled and clamped to `[-1, 1]`.
pub fn encode_inputs(own: &UavState, other: &UavState, enc: &InputEncoding) -> Result<[f64; INPUTS], GenomeError> {
    let speed = own.speed();
    if speed == 0.0 || !speed.is_finite() {
        return Err(GenomeError::ZeroSpeed);
    }
    let angle = -own.velocity.y.atan2(own.velocity.x);
    let dp = rotate(&(other.position - own.position), angle) / enc.position_scale;
    let dv = rotate(&(other.velocity - own.velocity), angle) / enc.velocity_scale;
    Ok([dp.x, dp.y, dv.x, dv.y].map(|v| v.clamp(-1.0, 1.0)))
}

impl ManeuverPolicy for Genome {
    fn raw_decision(&self, own: &UavState, other: &UavState) -> Result<RawDecision, PolicyError> {
        let x = encode_inputs(own, other, &InputEncoding::default()).map_err(|e| PolicyError(e.to_string()))?;
        self.forward(&x).map_err(|e| PolicyError(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_weights_give_mid_range_outputs() {
        let g = Genome::fully_connected(|_| 0.0);
        let out = g.forward(&[0.3, -0.2, 0.9, 0.1]).unwrap();
        assert_eq!(out.delta_v, 2.5);
        assert!((out.phi - 15f64.to_radians()).abs() < 1e-15);
        assert_eq!(out.s, 0.5);
        assert_eq!(out.strategy(), crate::maneuver::Strategy::SpeedChange);
    }

    #[test]
    fn hand_computed_forward_pass() {
        // in0 -> h (w=2), in1 -> h (w=-1), h bias 0.5; h -> out2 (w=3),
        // in0 -> out0 (w=1), out0 bias -0.25
        let mut g = Genome::empty();
        g.nodes.push(NodeGene { id: 7, kind: NodeKind::Hidden, activation: Activation::Tanh, bias: 0.5 });
        g.nodes.iter_mut().find(|n| n.id == 4).unwrap().bias = -0.25;
        let c = |innovation, from, to, weight| ConnectionGene { innovation, from, to, weight, enabled: true };
        g.connections = vec![c(0, 0, 7, 2.0), c(1, 1, 7, -1.0), c(2, 7, 6, 3.0), c(3, 0, 4, 1.0)];
        let x = [0.4, 0.2, 0.0, 0.0];
        let h = (2.0f64 * 0.4 - 0.2 + 0.5).tanh();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let out = g.forward(&x).unwrap();
        assert!((out.delta_v - 5.0 * sig(0.4 - 0.25)).abs() < 1e-15);
        assert!((out.phi - MAX_PHI * 0.5).abs() < 1e-15);
        assert!((out.s - sig(3.0 * h)).abs() < 1e-15);
    }

    #[test]
    fn cycles_are_detected() {
        let mut g = Genome::empty();
        g.nodes.push(NodeGene { id: 7, kind: NodeKind::Hidden, activation: Activation::Tanh, bias: 0.0 });
        g.nodes.push(NodeGene { id: 8, kind: NodeKind::Hidden, activation: Activation::Tanh, bias: 0.0 });
        let c = |innovation, from, to| ConnectionGene { innovation, from, to, weight: 1.0, enabled: true };
        g.connections = vec![c(0, 7, 8), c(1, 8, 7)];
        assert_eq!(g.forward(&[0.0; 4]), Err(GenomeError::Cyclic));
        g.connections[1].enabled = false;
        assert!(g.forward(&[0.0; 4]).is_ok());
    }

    #[test]
    fn head_on_encoding() {
        let own = UavState::from_xy(0.0, 0.0, 16.67, 0.0);
        let other = UavState::from_xy(100.0, 0.0, -16.67, 0.0);
        let x = encode_inputs(&own, &other, &InputEncoding::default()).unwrap();
        assert_eq!(x, [0.5, 0.0, -0.5, 0.0]);
        let same = encode_inputs(&own, &own, &InputEncoding::default()).unwrap();
        assert_eq!(same, [0.0; 4]);
        let still = UavState::from_xy(0.0, 0.0, 0.0, 0.0);
        assert_eq!(encode_inputs(&still, &other, &InputEncoding::default()), Err(GenomeError::ZeroSpeed));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut g = Genome::fully_connected(|i| (i as f64 + 0.1).sqrt() * std::f64::consts::PI - 3.3);
        g.nodes[5].bias = 1.0 / 3.0;
        g.connections[4].enabled = false;
        g.fitness = Some(37.123456789012345);
        let back = Genome::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        let bumped = g.to_json().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(Genome::from_json(&bumped), Err(GenomeError::Format(_))));
    }

    proptest! {
        #[test]
        fn encoding_is_frame_invariant(
            px in -90.0f64..90.0, py in -90.0f64..90.0, vx in -20.0f64..20.0, vy in -20.0f64..20.0,
            ox in 1.0f64..20.0, oy in -20.0f64..20.0, ang in -3.1f64..3.1, tx in -500.0f64..500.0,
        ) {
            let own = UavState::from_xy(0.0, 0.0, ox, oy);
            let other = UavState::from_xy(px, py, vx, vy);
            let enc = InputEncoding::default();
            let x = encode_inputs(&own, &other, &enc).unwrap();
            let off = crate::kinematics::Vec2::new(tx, -tx);
            let y = encode_inputs(&own.translated(off).rotated(ang), &other.translated(off).rotated(ang), &enc).unwrap();
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!(a.abs() <= 1.0);
            }
        }

        #[test]
        fn forward_is_pure(ws in proptest::collection::vec(-3.0f64..3.0, 12), x in proptest::array::uniform4(-1.0f64..1.0)) {
            let g = Genome::fully_connected(|i| ws[i]);
            prop_assert_eq!(g.forward(&x).unwrap(), g.forward(&x).unwrap());
        }
    }
}
