//! Networks of five-element symmetric ODE neurons.
//!
//! Each neuron is a ring of five coupled state variables with generative
//! (`k1`), self-decay (`k2`) and inhibitory (`k3`) terms. Neurons are wired
//! port to port into layered networks that are simulated as one coupled ODE,
//! run forward on a sample and backward (through the mirror-image dynamics
//! on the reversed graph) on the class errors. Parameters are then adapted
//! locally in each neuron from the correlation of the two passes.
//!
//! - [`element`]: five-element vectors and neuron parameters
//! - [`neuron`]: forward/inverse dynamics and fixed points
//! - [`integrate`]: fixed-step RK4
//! - [`topology`]: network graphs, wiring, reversal, validation
//! - [`engine`]: coupled forward/backward passes and read-out
//! - [`trainer`]: error targets, correlations and the update rules
//! - [`mnist`]: IDX parsing and dataset splits

pub mod element;
pub mod engine;
pub mod error;
pub mod integrate;
pub mod mnist;
pub mod neuron;
pub mod topology;
pub mod trainer;

pub use element::{ElementVector, NeuronParams, ParamBounds, ELEMENTS};
pub use engine::{
    backward_pass, classify, compute_leb, forward_pass, LebVector, Network, SimConfig, TraceIntegrals,
};
pub use error::{Result, WuxingError};
pub use neuron::{
    analytic_fixed_point, deviation, forward_derivative, inverse_derivative, numeric_fixed_point,
    numeric_inverse_fixed_point, Direction, FixedPoint, FixedPointConfig,
};
pub use topology::{build_network, reverse, validate, NetworkGraph, PortRole, WiringMode};
pub use trainer::{train_epoch, EpochMetrics, Strategies, TrainingConfig};
