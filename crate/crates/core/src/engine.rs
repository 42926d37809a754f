//! Whole-network simulation.
//!
//! All neurons of a network form one coupled ODE. At every integrator
//! substep each receiving port is driven by the sum of the current deviation
//! signals `E - B0` of the ports feeding it (plus any external drive), so
//! signals propagate through the layers continuously rather than layer by
//! layer. Deviation integrals are accumulated with the trapezoidal rule on
//! the integrator's step grid.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::element::{ElementVector, NeuronParams, ELEMENTS};
use crate::error::{Result, WuxingError};
use crate::integrate::{OdeSystem, Rk4};
use crate::neuron::{self, Direction, FixedPointConfig};
use crate::topology::{reverse, validate, NetworkGraph};

/// Time profile of external drives. Only constant holds are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveProfile {
    #[default]
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub step: f64,
    #[serde(default)]
    pub input_hold: DriveProfile,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            step: 0.01,
            input_hold: DriveProfile::Constant,
        }
    }
}

impl SimConfig {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        let cfg = Self {
            horizon,
            step,
            input_hold: DriveProfile::Constant,
        };
        cfg.steps()?;
        Ok(cfg)
    }

    /// Number of integrator steps covering `[0, horizon]`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.step > 0.0 && self.step.is_finite() && self.horizon.is_finite())
            || self.step > self.horizon
        {
            return Err(WuxingError::InvalidParameter(format!(
                "need 0 < step <= horizon, got step {} horizon {}",
                self.step, self.horizon
            )));
        }
        let n = (self.horizon / self.step).round();
        if ((n * self.step) - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(WuxingError::InvalidParameter(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.step
            )));
        }
        Ok(n as usize)
    }
}

/// Flat incidence structure for one propagation direction. Index
/// `5 * neuron + element` addresses a port.
#[derive(Debug, Clone)]
struct Coupling {
    offsets: Vec<usize>,
    sources: Vec<usize>,
    /// Receiving port of each external input.
    inputs: Vec<usize>,
    /// Read-out port of each external output.
    outputs: Vec<usize>,
}

impl Coupling {
    fn from_graph(g: &NetworkGraph) -> Self {
        let n = g.neuron_count() * ELEMENTS;
        let mut counts = vec![0usize; n + 1];
        for e in &g.edges {
            counts[e.dst_neuron * ELEMENTS + e.dst_element + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut sources = vec![0usize; g.edges.len()];
        // Edges sorted so every port sums its sources in a fixed order.
        let mut edges = g.edges.clone();
        edges.sort_unstable();
        for e in &edges {
            let d = e.dst_neuron * ELEMENTS + e.dst_element;
            sources[fill[d]] = e.src_neuron * ELEMENTS + e.src_element;
            fill[d] += 1;
        }
        Self {
            offsets,
            sources,
            inputs: g
                .external_inputs
                .iter()
                .map(|p| p.neuron * ELEMENTS + p.element)
                .collect(),
            outputs: g
                .external_outputs
                .iter()
                .map(|p| p.neuron * ELEMENTS + p.element)
                .collect(),
        }
    }

    #[inline]
    fn sources_of(&self, port: usize) -> &[usize] {
        &self.sources[self.offsets[port]..self.offsets[port + 1]]
    }
}

/// A network together with the equilibria of both of its directions.
#[derive(Debug, Clone)]
pub struct Network {
    graph: NetworkGraph,
    forward_fp: Vec<ElementVector>,
    backward_fp: Vec<ElementVector>,
    fwd: Coupling,
    bwd: Coupling,
}

impl Network {
    /// Validates `graph` and settles every neuron's forward and inverse
    /// fixed points.
    pub fn new(graph: NetworkGraph, fp: &FixedPointConfig) -> Result<Self> {
        let mut forward_fp = Vec::with_capacity(graph.neurons.len());
        let mut backward_fp = Vec::with_capacity(graph.neurons.len());
        for p in &graph.neurons {
            let (f, b) = settle_both(p, fp)?;
            forward_fp.push(f);
            backward_fp.push(b);
        }
        Self::with_fixed_points(graph, forward_fp, backward_fp)
    }

    /// Reassembles a network from stored equilibria.
    pub fn with_fixed_points(
        graph: NetworkGraph,
        forward_fp: Vec<ElementVector>,
        backward_fp: Vec<ElementVector>,
    ) -> Result<Self> {
        if graph.direction != Direction::Forward {
            return Err(WuxingError::InvalidParameter(
                "network graph must be in forward orientation".into(),
            ));
        }
        let report = validate(&graph);
        if !report.is_valid() {
            return Err(WuxingError::InvalidParameter(format!(
                "invalid graph: {} violation(s), first: {:?}",
                report.violations.len(),
                report.violations[0]
            )));
        }
        let n = graph.neuron_count();
        if forward_fp.len() != n || backward_fp.len() != n {
            return Err(WuxingError::Dimension(format!(
                "{n} neurons but {} forward / {} backward fixed points",
                forward_fp.len(),
                backward_fp.len()
            )));
        }
        let fwd = Coupling::from_graph(&graph);
        let bwd = Coupling::from_graph(&reverse(&graph));
        Ok(Self {
            graph,
            forward_fp,
            backward_fp,
            fwd,
            bwd,
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn into_graph(self) -> NetworkGraph {
        self.graph
    }

    pub fn params(&self) -> &[NeuronParams] {
        &self.graph.neurons
    }

    pub fn forward_fixed_points(&self) -> &[ElementVector] {
        &self.forward_fp
    }

    pub fn backward_fixed_points(&self) -> &[ElementVector] {
        &self.backward_fp
    }

    pub fn neuron_count(&self) -> usize {
        self.graph.neurons.len()
    }

    pub fn input_count(&self) -> usize {
        self.fwd.inputs.len()
    }

    pub fn class_count(&self) -> usize {
        self.fwd.outputs.len()
    }

    /// Installs new parameters for one neuron along with its equilibria.
    pub(crate) fn set_neuron(
        &mut self,
        neuron: usize,
        params: NeuronParams,
        forward_fp: ElementVector,
        backward_fp: ElementVector,
    ) {
        self.graph.neurons[neuron] = params;
        self.forward_fp[neuron] = forward_fp;
        self.backward_fp[neuron] = backward_fp;
    }

    /// Forward neurons feeding each neuron's input ports, deduplicated.
    pub fn upstream_of(&self, neuron: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..ELEMENTS)
            .flat_map(|e| self.fwd.sources_of(neuron * ELEMENTS + e))
            .map(|s| s / ELEMENTS)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Settles the forward and inverse equilibria of one neuron.
pub fn settle_both(p: &NeuronParams, fp: &FixedPointConfig) -> Result<(ElementVector, ElementVector)> {
    let f = neuron::settle_attracting(
        Direction::Forward,
        p,
        &neuron::analytic_guess(Direction::Forward, p)?,
        fp,
    )?;
    let b = neuron::settle_attracting(
        Direction::Inverse,
        p,
        &neuron::analytic_guess(Direction::Inverse, p)?,
        fp,
    )?;
    Ok((f.point.b0, b.point.b0))
}

struct CoupledSystem<'a> {
    dir: Direction,
    params: &'a [NeuronParams],
    b0: &'a [f64],
    coupling: &'a Coupling,
    external: &'a [f64],
}

impl CoupledSystem<'_> {
    #[inline]
    fn drive(&self, y: &[f64], port: usize) -> f64 {
        let mut s = self.external[port];
        for &src in self.coupling.sources_of(port) {
            s += y[src] - self.b0[src];
        }
        s
    }
}

impl OdeSystem for CoupledSystem<'_> {
    fn dim(&self) -> usize {
        self.params.len() * ELEMENTS
    }

    fn derivative(&self, y: &[f64], dy: &mut [f64]) {
        for (n, p) in self.params.iter().enumerate() {
            let base = n * ELEMENTS;
            let e: [f64; ELEMENTS] = std::array::from_fn(|i| y[base + i]);
            let input: [f64; ELEMENTS] = std::array::from_fn(|i| self.drive(y, base + i));
            let d = neuron::kernel(self.dir, &e, p, &input);
            dy[base..base + ELEMENTS].copy_from_slice(&d);
        }
    }
}

/// Per-neuron, per-element deviation integrals over one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIntegrals {
    pub integrals: Vec<ElementVector>,
    /// Largest `|D(t)|` seen at each element on the step grid.
    pub peaks: Vec<ElementVector>,
}

impl TraceIntegrals {
    pub fn neuron(&self, n: usize) -> &ElementVector {
        &self.integrals[n]
    }
}

/// Time-averaged deviation at each class read-out port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LebVector(pub Vec<f64>);

impl LebVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub leb: LebVector,
    pub trace: TraceIntegrals,
    /// Whether each neuron received any non-zero drive during the pass.
    pub driven: Vec<bool>,
    pub final_state: Vec<ElementVector>,
}

#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub trace: TraceIntegrals,
    pub final_state: Vec<ElementVector>,
}

struct PassOutput {
    trace: TraceIntegrals,
    final_state: Vec<ElementVector>,
}

fn chunk(v: &[f64]) -> Vec<ElementVector> {
    v.chunks_exact(ELEMENTS)
        .map(|c| ElementVector::raw(std::array::from_fn(|i| c[i])))
        .collect()
}

fn run_pass(
    dir: Direction,
    net: &Network,
    coupling: &Coupling,
    b0: &[ElementVector],
    external: &[f64],
    cfg: &SimConfig,
    mut dump: Option<&mut dyn Write>,
) -> Result<PassOutput> {
    let steps = cfg.steps()?;
    let h = cfg.step;
    let b0_flat: Vec<f64> = b0.iter().flat_map(|b| b.iter()).collect();
    let system = CoupledSystem {
        dir,
        params: &net.graph.neurons,
        b0: &b0_flat,
        coupling,
        external,
    };
    let n = b0_flat.len();
    let mut y = b0_flat.clone();
    let mut integral = vec![0.0; n];
    let mut peak = vec![0.0_f64; n];
    // D at the previous grid point; zero at t = 0 since every neuron starts at B0.
    let mut prev = vec![0.0; n];
    let mut rk = Rk4::new();

    if let Some(w) = dump.as_deref_mut() {
        write_dump_rows(w, 0.0, &y, &prev)?;
    }

    for step in 1..=steps {
        rk.step(&system, h, &mut y);
        let t = step as f64 * h;
        for i in 0..n {
            let d = y[i] - b0_flat[i];
            if !d.is_finite() {
                return Err(WuxingError::Divergence {
                    neuron: i / ELEMENTS,
                    time: t,
                });
            }
            integral[i] += 0.5 * h * (prev[i] + d);
            peak[i] = peak[i].max(d.abs());
            prev[i] = d;
        }
        if let Some(w) = dump.as_deref_mut() {
            write_dump_rows(w, t, &y, &prev)?;
        }
    }

    Ok(PassOutput {
        trace: TraceIntegrals {
            integrals: chunk(&integral),
            peaks: chunk(&peak),
        },
        final_state: chunk(&y),
    })
}

/// Header of the per-step trace dump.
pub const TRACE_HEADER: &str = "t,neuron,element,e,d";

fn write_dump_rows(w: &mut dyn Write, t: f64, y: &[f64], d: &[f64]) -> Result<()> {
    for i in 0..y.len() {
        writeln!(w, "{t},{},{},{},{}", i / ELEMENTS, i % ELEMENTS, y[i], d[i])?;
    }
    Ok(())
}

fn external_drive(coupling: &Coupling, n: usize, values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.len() != coupling.inputs.len() {
        return Err(WuxingError::Dimension(format!(
            "{what}: expected {} values, got {}",
            coupling.inputs.len(),
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(WuxingError::NonFinite("external drive"));
    }
    let mut ext = vec![0.0; n * ELEMENTS];
    for (&port, &v) in coupling.inputs.iter().zip(values) {
        ext[port] += v;
    }
    Ok(ext)
}

pub fn forward_pass(net: &Network, x: &[f64], cfg: &SimConfig) -> Result<ForwardResult> {
    forward_pass_inner(net, x, cfg, None)
}

/// [`forward_pass`] that also writes one CSV row per port per step to `dump`
/// (see [`TRACE_HEADER`]; the header itself is not written).
pub fn forward_pass_traced(
    net: &Network,
    x: &[f64],
    cfg: &SimConfig,
    dump: &mut dyn Write,
) -> Result<ForwardResult> {
    forward_pass_inner(net, x, cfg, Some(dump))
}

fn forward_pass_inner(
    net: &Network,
    x: &[f64],
    cfg: &SimConfig,
    dump: Option<&mut dyn Write>,
) -> Result<ForwardResult> {
    let n = net.neuron_count();
    let ext = external_drive(&net.fwd, n, x, "external input")?;
    let out = run_pass(Direction::Forward, net, &net.fwd, &net.forward_fp, &ext, cfg, dump)?;
    let leb = compute_leb(&out.trace, net.graph(), cfg);

    let driven = (0..n)
        .map(|neuron| {
            (0..ELEMENTS).any(|e| {
                let port = neuron * ELEMENTS + e;
                ext[port] != 0.0
                    || net
                        .fwd
                        .sources_of(port)
                        .iter()
                        .any(|&s| out.trace.peaks[s / ELEMENTS][s % ELEMENTS] > 0.0)
            })
        })
        .collect();

    Ok(ForwardResult {
        leb,
        trace: out.trace,
        driven,
        final_state: out.final_state,
    })
}

/// Runs the inverse dynamics on the reversed network with each class error
/// held at that class's read-out port.
pub fn backward_pass(net: &Network, err: &[f64], cfg: &SimConfig) -> Result<BackwardResult> {
    let n = net.neuron_count();
    let ext = external_drive(&net.bwd, n, err, "class error")?;
    let out = run_pass(Direction::Inverse, net, &net.bwd, &net.backward_fp, &ext, cfg, None)?;
    Ok(BackwardResult {
        trace: out.trace,
        final_state: out.final_state,
    })
}

/// `Leb_c = (1/T) * integral of D over [0, T]` at class `c`'s read-out port.
pub fn compute_leb(fwd: &TraceIntegrals, g: &NetworkGraph, cfg: &SimConfig) -> LebVector {
    LebVector(
        g.external_outputs
            .iter()
            .map(|p| fwd.integrals[p.neuron][p.element] / cfg.horizon)
            .collect(),
    )
}

/// Index of the largest component; the lowest index wins ties.
pub fn classify(leb: &LebVector) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in leb.0.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
