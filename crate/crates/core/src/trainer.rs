//! Correlation-driven parameter updates.
//!
//! After a forward pass (sample drive) and a backward pass (class errors on
//! the reversed network), every neuron holds two integrals per element:
//! `F_i = ∫D_i dt` and `B_i = ∫D̂_i dt`. Their product is the correlation
//! that drives the neuron's own parameters. Each parameter set gets its own
//! controller:
//!
//! | set | strategy     | correlation                         | update                 |
//! |-----|--------------|-------------------------------------|------------------------|
//! | K1  | integral     | `(Σ F_i)(Σ B_i)`, shared by all 5   | `k1 *= exp(+g2)`       |
//! | K2  | differential | `F_i B_i`, only on input nodes      | `k2_i *= exp(-g2_i)`   |
//! | K3  | proportional | `F_i B_i`                           | `k3_i *= exp(-g2_i)`   |
//!
//! with `g2 = atan(kt * g1) / kt`. A neuron is only touched when it carried
//! both a forward and a backward signal.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::element::{cyc, ElementVector, NeuronParams, ParamBounds, ELEMENTS};
use crate::engine::{
    backward_pass, classify, forward_pass, settle_both, ForwardResult, LebVector, Network, SimConfig,
};
use crate::error::{Result, WuxingError};
use crate::neuron::{settle_attracting, Direction, FixedPointConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Strategies {
    #[serde(default)]
    pub integral_k1: bool,
    #[serde(default)]
    pub differential_k2: bool,
    #[serde(default)]
    pub proportional_k3: bool,
    /// Applies `exp(+g2)` to K1 with the per-element proportional
    /// correlation (the same rule as K3 with the opposite sign).
    #[serde(default)]
    pub same_rule_k1: bool,
}

impl Strategies {
    pub const NONE: Self = Self {
        integral_k1: false,
        differential_k2: false,
        proportional_k3: false,
        same_rule_k1: false,
    };

    pub fn is_empty(&self) -> bool {
        *self == Self::NONE
    }
}

/// Which neurons count as input nodes for the differential strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputNodeRule {
    /// Any neuron that received non-zero forward drive during the pass.
    #[default]
    Driven,
    /// Only driven neurons of the first layer.
    FirstLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub target1: f64,
    pub target2: f64,
    pub kt: f64,
    pub signal_gate_eps: f64,
    pub strategies: Strategies,
    pub epochs: usize,
    pub bounds: ParamBounds,
    pub input_node: InputNodeRule,
    /// K2/K3 entry `i` is driven by the correlation of element `i + offset`.
    pub alignment_offset: isize,
    pub fixed_point: FixedPointConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            target1: 1.0,
            target2: 0.0,
            kt: 1.0,
            signal_gate_eps: 1e-9,
            strategies: Strategies {
                proportional_k3: true,
                ..Strategies::NONE
            },
            epochs: 10,
            bounds: ParamBounds::default(),
            input_node: InputNodeRule::Driven,
            alignment_offset: 0,
            fixed_point: FixedPointConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target1 > self.target2) {
            return Err(WuxingError::InvalidParameter(format!(
                "target1 ({}) must exceed target2 ({})",
                self.target1, self.target2
            )));
        }
        if !(self.kt > 0.0 && self.kt.is_finite()) {
            return Err(WuxingError::InvalidParameter(format!("kt must be positive, got {}", self.kt)));
        }
        if !(self.signal_gate_eps >= 0.0) {
            return Err(WuxingError::InvalidParameter("signal_gate_eps must be >= 0".into()));
        }
        if !(self.fixed_point.tol > 0.0) {
            return Err(WuxingError::InvalidParameter("fixed-point tolerance must be > 0".into()));
        }
        self.bounds.validate()
    }
}

/// Per-class error to inject on the backward pass. The labelled class is
/// pushed up towards `target1`, every other class down towards `target2`;
/// classes already past their target get no error.
pub fn output_error(leb: &LebVector, label: usize, cfg: &TrainingConfig) -> Result<Vec<f64>> {
    if label >= leb.len() {
        return Err(WuxingError::Dimension(format!(
            "label {label} out of range for {} classes",
            leb.len()
        )));
    }
    Ok(leb
        .0
        .iter()
        .enumerate()
        .map(|(c, &v)| {
            if c == label {
                if v < cfg.target1 {
                    cfg.target1 - v
                } else {
                    0.0
                }
            } else if v > cfg.target2 {
                cfg.target2 - v
            } else {
                0.0
            }
        })
        .collect())
}

pub fn correlation_proportional(fwd: &ElementVector, bwd: &ElementVector) -> ElementVector {
    fwd.zip_map(bwd, |f, b| f * b)
}

pub fn correlation_integral(fwd: &ElementVector, bwd: &ElementVector) -> f64 {
    fwd.sum() * bwd.sum()
}

pub fn correlation_differential(
    fwd: &ElementVector,
    bwd: &ElementVector,
    is_forward_input_node: bool,
) -> ElementVector {
    if is_forward_input_node {
        correlation_proportional(fwd, bwd)
    } else {
        ElementVector::zeros()
    }
}

/// `atan(g1 * kt) / kt`, bounded by `π / (2 kt)`.
#[inline]
pub fn squash(g1: f64, kt: f64) -> f64 {
    (g1 * kt).atan() / kt
}

pub fn squash_vec(g1: &ElementVector, kt: f64) -> ElementVector {
    g1.map(|v| squash(v, kt))
}

/// Raw and squashed correlation for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationG {
    pub g1: ElementVector,
    pub g2: ElementVector,
}

impl CorrelationG {
    pub fn new(g1: ElementVector, kt: f64) -> Self {
        Self { g1, g2: squash_vec(&g1, kt) }
    }
}

/// Squashed exponents for each parameter set; `None` leaves the set alone.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamUpdate {
    /// Applied as `exp(+g2)`.
    pub k1: Option<ElementVector>,
    /// Applied as `exp(-g2)`.
    pub k2: Option<ElementVector>,
    /// Applied as `exp(-g2)`.
    pub k3: Option<ElementVector>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Updated {
    pub params: NeuronParams,
    pub clamp_events: usize,
}

fn scale_set(
    set: &ElementVector,
    exponent: &ElementVector,
    sign: f64,
    bounds: &ParamBounds,
    clamps: &mut usize,
) -> ElementVector {
    let mut out = *set;
    for i in 0..ELEMENTS {
        let v = set[i] * (sign * exponent[i]).exp();
        let c = v.clamp(bounds.min, bounds.max);
        if c != v {
            *clamps += 1;
            log::debug!("clamp saturation: {v} -> {c}");
        }
        out[i] = c;
    }
    out
}

/// Multiplicative update of one neuron's parameters. Nothing changes unless
/// `gate` is set.
pub fn apply_updates(p: &NeuronParams, upd: &ParamUpdate, gate: bool, bounds: &ParamBounds) -> Updated {
    if !gate {
        return Updated { params: *p, clamp_events: 0 };
    }
    let mut clamps = 0;
    let mut out = *p;
    if let Some(g) = &upd.k1 {
        out.k1 = scale_set(&p.k1, g, 1.0, bounds, &mut clamps);
    }
    if let Some(g) = &upd.k2 {
        out.k2 = scale_set(&p.k2, g, -1.0, bounds, &mut clamps);
    }
    if let Some(g) = &upd.k3 {
        out.k3 = scale_set(&p.k3, g, -1.0, bounds, &mut clamps);
    }
    Updated { params: out, clamp_events: clamps }
}

/// Both-signals rule on the per-element integrals.
pub fn signal_gate(fwd: &ElementVector, bwd: &ElementVector, eps: f64) -> bool {
    fwd.max_abs() > eps && bwd.max_abs() > eps
}

fn aligned(g: ElementVector, offset: isize) -> ElementVector {
    if offset == 0 {
        g
    } else {
        ElementVector::raw(std::array::from_fn(|i| g[cyc(i, offset)]))
    }
}

/// Builds the squashed exponents the enabled strategies ask for.
pub fn neuron_update(
    fwd: &ElementVector,
    bwd: &ElementVector,
    input_node: bool,
    cfg: &TrainingConfig,
) -> ParamUpdate {
    let s = &cfg.strategies;
    let prop = aligned(correlation_proportional(fwd, bwd), cfg.alignment_offset);
    let mut upd = ParamUpdate::default();
    if s.integral_k1 {
        let g2 = squash(correlation_integral(fwd, bwd), cfg.kt);
        upd.k1 = Some(ElementVector::splat(g2));
    }
    if s.same_rule_k1 {
        let g2 = squash_vec(&prop, cfg.kt);
        upd.k1 = Some(match upd.k1 {
            Some(prev) => prev + g2,
            None => g2,
        });
    }
    if s.differential_k2 {
        let g1 = if input_node { prop } else { ElementVector::zeros() };
        upd.k2 = Some(squash_vec(&g1, cfg.kt));
    }
    if s.proportional_k3 {
        upd.k3 = Some(squash_vec(&prop, cfg.kt));
    }
    upd
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub samples: usize,
    pub correct: usize,
    /// Sum over samples of the mean absolute class error.
    pub abs_error_sum: f64,
    pub updated_neurons: usize,
    pub clamp_events: usize,
    /// Updates rolled back because the new parameters had no settled state.
    pub fixed_point_failures: usize,
}

impl EpochMetrics {
    pub fn accuracy(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.correct as f64 / self.samples as f64
        }
    }

    pub fn mean_abs_error(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.abs_error_sum / self.samples as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleOutcome {
    pub prediction: usize,
    pub error: Vec<f64>,
    pub updated: Vec<usize>,
    pub clamp_events: usize,
    pub fixed_point_failures: usize,
}

/// Forward pass, error, backward pass and local updates for one sample.
pub fn train_sample(
    net: &mut Network,
    x: &[f64],
    label: usize,
    cfg: &TrainingConfig,
    sim: &SimConfig,
) -> Result<SampleOutcome> {
    let fwd = forward_pass(net, x, sim)?;
    let prediction = classify(&fwd.leb).unwrap_or(0);
    let error = output_error(&fwd.leb, label, cfg)?;
    let mut out = SampleOutcome {
        prediction,
        error,
        ..Default::default()
    };
    if out.error.iter().all(|e| *e == 0.0) || cfg.strategies.is_empty() {
        return Ok(out);
    }
    let upd = update_from_error(net, &fwd, &out.error, cfg, sim)?;
    out.updated = upd.updated;
    out.clamp_events = upd.clamp_events;
    out.fixed_point_failures = upd.fixed_point_failures;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateSummary {
    /// Neurons whose parameters changed, in index order.
    pub updated: Vec<usize>,
    pub clamp_events: usize,
    pub fixed_point_failures: usize,
}

/// Backward pass on `error` followed by the gated local updates, using the
/// forward pass `fwd` already run on the current parameters.
pub fn update_from_error(
    net: &mut Network,
    fwd: &ForwardResult,
    error: &[f64],
    cfg: &TrainingConfig,
    sim: &SimConfig,
) -> Result<UpdateSummary> {
    let mut out = UpdateSummary::default();
    if cfg.strategies.is_empty() {
        return Ok(out);
    }
    let bwd = backward_pass(net, error, sim)?;

    let first_layer = net.graph().layer_range(0);
    for n in 0..net.neuron_count() {
        let f = fwd.trace.neuron(n);
        let b = bwd.trace.neuron(n);
        if !signal_gate(f, b, cfg.signal_gate_eps) {
            continue;
        }
        let input_node = fwd.driven[n]
            && match cfg.input_node {
                InputNodeRule::Driven => true,
                InputNodeRule::FirstLayer => first_layer.contains(&n),
            };
        let upd = neuron_update(f, b, input_node, cfg);
        let old = net.params()[n];
        let updated = apply_updates(&old, &upd, true, &cfg.bounds);
        if updated.params == old {
            continue;
        }
        match refresh_fixed_points(net, n, &updated.params, &cfg.fixed_point) {
            Ok((fp, bp)) => {
                net.set_neuron(n, updated.params, fp, bp);
                out.updated.push(n);
                out.clamp_events += updated.clamp_events;
            }
            Err(e) => {
                log::debug!("neuron {n}: update rolled back ({e})");
                out.fixed_point_failures += 1;
            }
        }
    }
    Ok(out)
}

/// Settles both equilibria under new parameters, warm-started from the
/// current ones.
fn refresh_fixed_points(
    net: &Network,
    n: usize,
    p: &NeuronParams,
    fp: &FixedPointConfig,
) -> Result<(ElementVector, ElementVector)> {
    let warm = settle_attracting(Direction::Forward, p, &net.forward_fixed_points()[n], fp).and_then(|f| {
        settle_attracting(Direction::Inverse, p, &net.backward_fixed_points()[n], fp).map(|b| (f.point.b0, b.point.b0))
    });
    warm.or_else(|_| settle_both(p, fp))
}

/// An epoch cut short by a numerical failure.
#[derive(Debug)]
pub struct EpochAborted {
    pub partial: EpochMetrics,
    pub sample: usize,
    pub source: WuxingError,
}

impl fmt::Display for EpochAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch aborted at sample {}: {}", self.sample, self.source)
    }
}

impl std::error::Error for EpochAborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// One online pass over `data`; parameters change between samples.
pub fn train_epoch<'a, I>(
    net: &mut Network,
    data: I,
    cfg: &TrainingConfig,
    sim: &SimConfig,
) -> std::result::Result<EpochMetrics, EpochAborted>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    let mut m = EpochMetrics::default();
    for (i, (x, label)) in data.into_iter().enumerate() {
        let out = match train_sample(net, x, label, cfg, sim) {
            Ok(o) => o,
            Err(source) => {
                return Err(EpochAborted {
                    partial: m,
                    sample: i,
                    source,
                })
            }
        };
        m.samples += 1;
        if out.prediction == label {
            m.correct += 1;
        }
        m.abs_error_sum += out.error.iter().map(|e| e.abs()).sum::<f64>() / out.error.len() as f64;
        m.updated_neurons += out.updated.len();
        m.clamp_events += out.clamp_events;
        m.fixed_point_failures += out.fixed_point_failures;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[label][prediction]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Forward passes only; parameters are not touched.
pub fn evaluate<'a, I>(net: &Network, data: I, sim: &SimConfig) -> Result<EvalReport>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    let k = net.class_count();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut samples = 0;
    let mut correct = 0;
    for (x, label) in data {
        if label >= k {
            return Err(WuxingError::Dimension(format!("label {label} out of range for {k} classes")));
        }
        let fwd = forward_pass(net, x, sim)?;
        let pred = classify(&fwd.leb).unwrap_or(0);
        confusion[label][pred] += 1;
        samples += 1;
        if pred == label {
            correct += 1;
        }
    }
    if samples == 0 {
        return Err(WuxingError::InvalidParameter("evaluation split is empty".into()));
    }
    Ok(EvalReport {
        samples,
        correct,
        accuracy: correct as f64 / samples as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn ev(v: [f64; 5]) -> ElementVector {
        ElementVector::new(v).unwrap()
    }

    #[test]
    fn output_error_branches() {
        let cfg = TrainingConfig::default();
        let e = output_error(&LebVector(vec![0.8, 0.3]), 0, &cfg).unwrap();
        assert!((e[0] - 0.2).abs() < 1e-15);
        assert!((e[1] + 0.3).abs() < 1e-15);
        let e = output_error(&LebVector(vec![1.2, -0.1]), 0, &cfg).unwrap();
        assert_eq!(e, vec![0.0, 0.0]);
        assert!(output_error(&LebVector(vec![0.0; 3]), 3, &cfg).is_err());
    }

    #[test]
    fn correlations() {
        let z = ElementVector::zeros();
        let f = ev([1.0, 0.0, 0.0, 0.0, 0.0]);
        let b = ev([2.0, 5.0, 5.0, 5.0, 5.0]);
        assert_eq!(correlation_proportional(&f, &z), z);
        assert_eq!(correlation_proportional(&f, &b), ev([2.0, 0.0, 0.0, 0.0, 0.0]));
        let ones = ElementVector::splat(1.0);
        assert_eq!(correlation_integral(&ones, &ones), 25.0);
        assert_eq!(correlation_integral(&ev([1.0, -1.0, 2.0, -2.0, 0.0]), &b), 0.0);
        assert_eq!(correlation_differential(&f, &b, false), z);
        assert_eq!(correlation_differential(&f, &b, true), correlation_proportional(&f, &b));
    }

    #[test]
    fn squash_limits() {
        assert_eq!(squash(0.0, 3.0), 0.0);
        assert!((squash(1e300, 2.0) - FRAC_PI_2 / 2.0).abs() < 1e-12);
        assert_eq!(squash(-0.7, 1.3), -squash(0.7, 1.3));
    }

    #[test]
    fn gate_blocks_updates() {
        let p = NeuronParams::default();
        let upd = ParamUpdate {
            k1: Some(ElementVector::splat(0.3)),
            k2: Some(ElementVector::splat(0.3)),
            k3: Some(ElementVector::splat(0.3)),
        };
        let b = ParamBounds::default();
        assert_eq!(apply_updates(&p, &upd, false, &b).params, p);
        let zero = ParamUpdate {
            k1: Some(ElementVector::zeros()),
            k2: Some(ElementVector::zeros()),
            k3: Some(ElementVector::zeros()),
        };
        assert_eq!(apply_updates(&p, &zero, true, &b).params, p);
        let u = apply_updates(&p, &upd, true, &b).params;
        assert!(u.k1.iter().zip(p.k1.iter()).all(|(n, o)| n > o));
        assert!(u.k2.iter().zip(p.k2.iter()).all(|(n, o)| n < o));
        assert!(u.k3.iter().zip(p.k3.iter()).all(|(n, o)| n < o));
    }

    #[test]
    fn clamping_is_counted() {
        let p = NeuronParams::default();
        let upd = ParamUpdate {
            k3: Some(ElementVector::splat(50.0)),
            ..Default::default()
        };
        let u = apply_updates(&p, &upd, true, &ParamBounds::default());
        assert_eq!(u.clamp_events, 5);
        assert!(u.params.k3.iter().all(|v| v == 1e-3));
    }

    #[test]
    fn strategies_only_touch_their_set() {
        let f = ev([0.5, -0.2, 0.1, 0.3, 0.0]);
        let b = ev([0.4, 0.1, -0.6, 0.2, 0.9]);
        let mut cfg = TrainingConfig::default();
        cfg.strategies = Strategies { integral_k1: true, ..Strategies::NONE };
        let u = neuron_update(&f, &b, true, &cfg);
        assert!(u.k1.is_some() && u.k2.is_none() && u.k3.is_none());
        let k1 = u.k1.unwrap();
        assert!(k1.iter().all(|v| v == k1[0]));
        cfg.strategies = Strategies { differential_k2: true, ..Strategies::NONE };
        let u = neuron_update(&f, &b, false, &cfg);
        assert_eq!(u.k2, Some(ElementVector::zeros()));
        assert!(u.k1.is_none() && u.k3.is_none());
    }

    #[test]
    fn alignment_offset_rotates_the_correlation() {
        let f = ev([1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = ElementVector::splat(1e-3);
        let mut cfg = TrainingConfig::default();
        cfg.alignment_offset = -2;
        let u = neuron_update(&f, &b, true, &cfg).k3.unwrap();
        // Entry 0 now reads element 3.
        assert!((u[0] - squash(4e-3, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainingConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.target2 = 2.0;
        assert!(cfg.validate().is_err());
        cfg = TrainingConfig::default();
        cfg.kt = 0.0;
        assert!(cfg.validate().is_err());
    }
}
