//! Layered networks of five-element neurons.
//!
//! Each element of a neuron is a port with one role per propagation
//! direction: it either receives (input), emits its deviation signal
//! (output), or is left alone (unused). Edges always run from an output
//! element to an input element of a neuron in the next layer downstream.
//! Fan-out copies a signal to every edge; fan-in sums all incoming signals.
//!
//! All random choices are drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`)
//! seeded with `seed_from_u64(seed)`, in a fixed order: role assignment for
//! every neuron in id order, then boundary wiring from the first boundary to
//! the last.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::element::{NeuronParams, ParamBounds, ELEMENTS};
use crate::error::{Result, WuxingError};
use crate::neuron::Direction;

pub const GRAPH_FORMAT: &str = "wuxing-graph";
pub const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortRole {
    Input,
    Output,
    Unused,
}

impl PortRole {
    pub fn flipped(self) -> Self {
        match self {
            PortRole::Input => PortRole::Output,
            PortRole::Output => PortRole::Input,
            PortRole::Unused => PortRole::Unused,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Port {
    pub neuron: usize,
    pub element: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src_neuron: usize,
    pub src_element: usize,
    pub dst_neuron: usize,
    pub dst_element: usize,
}

impl Edge {
    pub fn src(&self) -> Port {
        Port {
            neuron: self.src_neuron,
            element: self.src_element,
        }
    }

    pub fn dst(&self) -> Port {
        Port {
            neuron: self.dst_neuron,
            element: self.dst_element,
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            src_neuron: self.dst_neuron,
            src_element: self.dst_element,
            dst_neuron: self.src_neuron,
            dst_element: self.src_element,
        }
    }
}

/// How adjacent layers are wired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WiringMode {
    /// First and last boundaries fully connected, interior boundaries random.
    Paper,
    /// Every boundary random.
    Random,
    /// Every boundary fully connected.
    Full,
}

impl WiringMode {
    fn boundary_is_full(self, boundary: usize, n_boundaries: usize) -> bool {
        match self {
            WiringMode::Paper => boundary == 0 || boundary + 1 == n_boundaries,
            WiringMode::Random => false,
            WiringMode::Full => true,
        }
    }
}

impl fmt::Display for WiringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WiringMode::Paper => "paper",
            WiringMode::Random => "random",
            WiringMode::Full => "full",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for WiringMode {
    type Err = WuxingError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(WiringMode::Paper),
            "random" => Ok(WiringMode::Random),
            "full" => Ok(WiringMode::Full),
            other => Err(WuxingError::InvalidParameter(format!(
                "unknown wiring mode {other:?} (expected paper, random or full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WiringOptions {
    pub mode: WiringMode,
    /// Give every element of every neuron a role (no unused elements).
    pub all_ports: bool,
    pub initial_params: NeuronParams,
}

impl Default for WiringOptions {
    fn default() -> Self {
        Self {
            mode: WiringMode::Paper,
            all_ports: false,
            initial_params: NeuronParams::default(),
        }
    }
}

impl WiringOptions {
    pub fn with_mode(mode: WiringMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub layer_sizes: Vec<usize>,
    /// Orientation of `roles` and `edges`: `Forward` for a built graph,
    /// `Inverse` after [`reverse`].
    pub direction: Direction,
    pub neurons: Vec<NeuronParams>,
    pub roles: Vec<[PortRole; ELEMENTS]>,
    pub edges: Vec<Edge>,
    /// Feature index -> port receiving it.
    pub external_inputs: Vec<Port>,
    /// Class index -> port read out for it.
    pub external_outputs: Vec<Port>,
    pub seed: u64,
    pub wiring: WiringMode,
}

impl NetworkGraph {
    pub fn neuron_count(&self) -> usize {
        self.layer_sizes.iter().sum()
    }

    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut out = Vec::with_capacity(self.layer_sizes.len() + 1);
        out.push(0);
        for s in &self.layer_sizes {
            acc += s;
            out.push(acc);
        }
        out
    }

    pub fn layer_range(&self, layer: usize) -> std::ops::Range<usize> {
        let start: usize = self.layer_sizes[..layer].iter().sum();
        start..start + self.layer_sizes[layer]
    }

    pub fn layer_of(&self, neuron: usize) -> Option<usize> {
        let mut acc = 0;
        for (l, s) in self.layer_sizes.iter().enumerate() {
            acc += s;
            if neuron < acc {
                return Some(l);
            }
        }
        None
    }

    /// Layer that receives external inputs in this orientation.
    pub fn source_layer(&self) -> usize {
        match self.direction {
            Direction::Forward => 0,
            Direction::Inverse => self.layer_sizes.len() - 1,
        }
    }

    pub fn sink_layer(&self) -> usize {
        match self.direction {
            Direction::Forward => self.layer_sizes.len() - 1,
            Direction::Inverse => 0,
        }
    }

    pub fn ports_with_role(&self, neuron: usize, role: PortRole) -> impl Iterator<Item = usize> + '_ {
        self.roles[neuron]
            .iter()
            .enumerate()
            .filter(move |(_, r)| **r == role)
            .map(|(i, _)| i)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GraphFile {
            format: GRAPH_FORMAT.to_string(),
            version: GRAPH_VERSION,
            graph: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        if file.format != GRAPH_FORMAT {
            return Err(WuxingError::InvalidParameter(format!(
                "not a graph file (format {:?})",
                file.format
            )));
        }
        if file.version != GRAPH_VERSION {
            return Err(WuxingError::Version {
                found: file.version,
                expected: GRAPH_VERSION,
            });
        }
        Ok(file.graph)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    format: String,
    version: u32,
    graph: NetworkGraph,
}

/// Builds a network with the default initial parameters (1, 0.5, 0.5).
pub fn build_network(layer_sizes: &[usize], wiring: WiringMode, seed: u64) -> Result<NetworkGraph> {
    build_network_with(layer_sizes, &WiringOptions::with_mode(wiring), seed)
}

pub fn build_network_with(
    layer_sizes: &[usize],
    opts: &WiringOptions,
    seed: u64,
) -> Result<NetworkGraph> {
    if layer_sizes.len() < 2 {
        return Err(WuxingError::InvalidParameter(format!(
            "a network needs at least 2 layers, got {}",
            layer_sizes.len()
        )));
    }
    if let Some(l) = layer_sizes.iter().position(|&s| s == 0) {
        return Err(WuxingError::Topology {
            boundary: l.saturating_sub(1),
            reason: format!("layer {l} is empty"),
        });
    }
    opts.initial_params.check_positive()?;

    let n_layers = layer_sizes.len();
    let n_boundaries = n_layers - 1;
    let full: Vec<bool> = (0..n_boundaries)
        .map(|b| opts.mode.boundary_is_full(b, n_boundaries))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roles = Vec::with_capacity(layer_sizes.iter().sum());
    for (layer, &size) in layer_sizes.iter().enumerate() {
        let first = layer == 0;
        let last = layer + 1 == n_layers;
        for _ in 0..size {
            // Input side: a single port when fed externally or by a full boundary.
            let n_in = if first || full[layer - 1] {
                1
            } else if opts.all_ports && last {
                ELEMENTS - 1
            } else {
                rng.gen_range(1..=ELEMENTS - 1)
            };
            let n_out = if last {
                1
            } else if opts.all_ports {
                ELEMENTS - n_in
            } else if full[layer] {
                1
            } else {
                rng.gen_range(1..=ELEMENTS - n_in)
            };
            let mut order: [usize; ELEMENTS] = std::array::from_fn(|i| i);
            order.shuffle(&mut rng);
            let mut r = [PortRole::Unused; ELEMENTS];
            for &e in &order[..n_in] {
                r[e] = PortRole::Input;
            }
            for &e in &order[n_in..n_in + n_out] {
                r[e] = PortRole::Output;
            }
            roles.push(r);
        }
    }

    let mut graph = NetworkGraph {
        layer_sizes: layer_sizes.to_vec(),
        direction: Direction::Forward,
        neurons: vec![opts.initial_params; roles.len()],
        roles,
        edges: Vec::new(),
        external_inputs: Vec::new(),
        external_outputs: Vec::new(),
        seed,
        wiring: opts.mode,
    };

    for (b, &is_full) in full.iter().enumerate() {
        let outs: Vec<Port> = graph
            .layer_range(b)
            .flat_map(|n| {
                graph
                    .ports_with_role(n, PortRole::Output)
                    .map(move |element| Port { neuron: n, element })
            })
            .collect();
        let ins: Vec<Port> = graph
            .layer_range(b + 1)
            .flat_map(|n| {
                graph
                    .ports_with_role(n, PortRole::Input)
                    .map(move |element| Port { neuron: n, element })
            })
            .collect();
        if outs.is_empty() || ins.is_empty() {
            return Err(WuxingError::Topology {
                boundary: b,
                reason: format!("{} output ports feeding {} input ports", outs.len(), ins.len()),
            });
        }
        let edges = if is_full {
            wire_full(&outs, &ins)
        } else {
            wire_random(&outs, &ins, &mut rng)
        };
        graph.edges.extend(edges);
    }

    graph.external_inputs = graph
        .layer_range(0)
        .map(|n| Port {
            neuron: n,
            element: graph.ports_with_role(n, PortRole::Input).next().expect("first-layer input port"),
        })
        .collect();
    graph.external_outputs = graph
        .layer_range(n_layers - 1)
        .map(|n| Port {
            neuron: n,
            element: graph.ports_with_role(n, PortRole::Output).next().expect("last-layer output port"),
        })
        .collect();
    Ok(graph)
}

fn wire_full(outs: &[Port], ins: &[Port]) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(outs.len() * ins.len());
    for s in outs {
        for d in ins {
            edges.push(Edge {
                src_neuron: s.neuron,
                src_element: s.element,
                dst_neuron: d.neuron,
                dst_element: d.element,
            });
        }
    }
    edges
}

/// Uniform random matching that covers both sides: every output port feeds
/// at least one input port and every input port is fed at least once. The
/// shorter side is reshuffled for each pass over the longer one, so no pair
/// repeats.
fn wire_random(outs: &[Port], ins: &[Port], rng: &mut ChaCha8Rng) -> Vec<Edge> {
    let mut outs = outs.to_vec();
    let mut ins = ins.to_vec();
    outs.shuffle(rng);
    ins.shuffle(rng);
    let n = outs.len().max(ins.len());
    let mut edges = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 && k % outs.len() == 0 {
            outs.shuffle(rng);
        }
        if k > 0 && k % ins.len() == 0 {
            ins.shuffle(rng);
        }
        let s = outs[k % outs.len()];
        let d = ins[k % ins.len()];
        edges.push(Edge {
            src_neuron: s.neuron,
            src_element: s.element,
            dst_neuron: d.neuron,
            dst_element: d.element,
        });
    }
    edges.sort_unstable();
    edges
}

/// Flips every edge and role; external outputs become the injection points.
pub fn reverse(g: &NetworkGraph) -> NetworkGraph {
    NetworkGraph {
        layer_sizes: g.layer_sizes.clone(),
        direction: match g.direction {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        },
        neurons: g.neurons.clone(),
        roles: g.roles.iter().map(|r| r.map(PortRole::flipped)).collect(),
        edges: g.edges.iter().map(Edge::reversed).collect(),
        external_inputs: g.external_outputs.clone(),
        external_outputs: g.external_inputs.clone(),
        seed: g.seed,
        wiring: g.wiring,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Violation {
    Shape(String),
    OutOfRange { what: &'static str, index: usize },
    /// Element used both as a receiver and as a sender in this orientation.
    BothRoles(Port),
    EdgeSourceNotOutput { edge: usize, port: Port },
    EdgeTargetNotInput { edge: usize, port: Port },
    NotAdjacent { edge: usize, src_layer: usize, dst_layer: usize },
    DuplicateEdge { edge: usize },
    ExternalInputLayer { feature: usize, port: Port },
    ExternalOutputLayer { class: usize, port: Port },
    ExternalInputNotInput { feature: usize, port: Port },
    ExternalOutputNotOutput { class: usize, port: Port },
    UndrivenInput(Port),
    NoInputPort { neuron: usize },
    NoOutputPort { neuron: usize },
    InvalidParams { neuron: usize, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(g: &NetworkGraph) -> ValidationReport {
    validate_with_bounds(g, None)
}

pub fn validate_with_bounds(g: &NetworkGraph, bounds: Option<&ParamBounds>) -> ValidationReport {
    let mut v = Vec::new();
    let n = g.neuron_count();
    if g.layer_sizes.len() < 2 {
        v.push(Violation::Shape(format!("{} layers", g.layer_sizes.len())));
    }
    if g.neurons.len() != n || g.roles.len() != n {
        v.push(Violation::Shape(format!(
            "{n} neurons from layer sizes, {} parameter sets, {} role sets",
            g.neurons.len(),
            g.roles.len()
        )));
        return ValidationReport { violations: v };
    }
    if v.iter().any(|x| matches!(x, Violation::Shape(_))) {
        return ValidationReport { violations: v };
    }

    let in_range = |p: &Port| p.neuron < n && p.element < ELEMENTS;
    // (neuron, element) -> used as receiver / used as sender.
    let mut receives: BTreeSet<Port> = BTreeSet::new();
    let mut sends: BTreeSet<Port> = BTreeSet::new();
    let mut seen = HashSet::new();

    for (i, e) in g.edges.iter().enumerate() {
        if !in_range(&e.src()) || !in_range(&e.dst()) {
            v.push(Violation::OutOfRange { what: "edge", index: i });
            continue;
        }
        sends.insert(e.src());
        receives.insert(e.dst());
        if g.roles[e.src_neuron][e.src_element] != PortRole::Output {
            v.push(Violation::EdgeSourceNotOutput { edge: i, port: e.src() });
        }
        if g.roles[e.dst_neuron][e.dst_element] != PortRole::Input {
            v.push(Violation::EdgeTargetNotInput { edge: i, port: e.dst() });
        }
        let sl = g.layer_of(e.src_neuron).unwrap_or(usize::MAX);
        let dl = g.layer_of(e.dst_neuron).unwrap_or(usize::MAX);
        let adjacent = match g.direction {
            Direction::Forward => dl == sl + 1,
            Direction::Inverse => sl == dl + 1,
        };
        if !adjacent {
            v.push(Violation::NotAdjacent { edge: i, src_layer: sl, dst_layer: dl });
        }
        if !seen.insert(*e) {
            v.push(Violation::DuplicateEdge { edge: i });
        }
    }

    let src_layer = g.source_layer();
    let sink_layer = g.sink_layer();
    for (f, p) in g.external_inputs.iter().enumerate() {
        if !in_range(p) {
            v.push(Violation::OutOfRange { what: "external input", index: f });
            continue;
        }
        receives.insert(*p);
        if g.layer_of(p.neuron) != Some(src_layer) {
            v.push(Violation::ExternalInputLayer { feature: f, port: *p });
        }
        if g.roles[p.neuron][p.element] != PortRole::Input {
            v.push(Violation::ExternalInputNotInput { feature: f, port: *p });
        }
    }
    for (c, p) in g.external_outputs.iter().enumerate() {
        if !in_range(p) {
            v.push(Violation::OutOfRange { what: "external output", index: c });
            continue;
        }
        sends.insert(*p);
        if g.layer_of(p.neuron) != Some(sink_layer) {
            v.push(Violation::ExternalOutputLayer { class: c, port: *p });
        }
        if g.roles[p.neuron][p.element] != PortRole::Output {
            v.push(Violation::ExternalOutputNotOutput { class: c, port: *p });
        }
    }

    for p in receives.intersection(&sends) {
        v.push(Violation::BothRoles(*p));
    }

    for (neuron, r) in g.roles.iter().enumerate() {
        if !r.contains(&PortRole::Input) {
            v.push(Violation::NoInputPort { neuron });
        }
        if !r.contains(&PortRole::Output) {
            v.push(Violation::NoOutputPort { neuron });
        }
        for (element, role) in r.iter().enumerate() {
            let p = Port { neuron, element };
            if *role == PortRole::Input && !receives.contains(&p) {
                v.push(Violation::UndrivenInput(p));
            }
        }
        let check = match bounds {
            Some(b) => g.neurons[neuron].validate(b),
            None => g.neurons[neuron].check_positive(),
        };
        if let Err(e) = check {
            v.push(Violation::InvalidParams { neuron, reason: e.to_string() });
        }
    }

    ValidationReport { violations: v }
}
