//! Experiment description, read from a single TOML file.
//!
//! Every section is optional; anything left out takes the desk-scale
//! defaults below. The effective spec is written back next to the metrics
//! so that a run can be repeated from its output directory alone.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use wuxing_core::topology::WiringOptions;
use wuxing_core::trainer::InputNodeRule;
use wuxing_core::{
    FixedPointConfig, NeuronParams, ParamBounds, SimConfig, Strategies, TrainingConfig, WiringMode,
};

use crate::HarnessError;

/// Named training protocols. Each maps to exactly one strategy set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    #[serde(rename = "case1_K3_only")]
    Case1K3Only,
    #[serde(rename = "case2_K1K3_same_rule")]
    Case2K1K3SameRule,
    #[serde(rename = "pid_I")]
    PidI,
    #[serde(rename = "pid_D")]
    PidD,
    #[serde(rename = "pid_P")]
    PidP,
    /// Integral on K1 together with proportional on K3.
    #[serde(rename = "pid_combo")]
    PidCombo,
}

impl Case {
    pub const ALL: [Case; 6] = [
        Case::Case1K3Only,
        Case::Case2K1K3SameRule,
        Case::PidI,
        Case::PidD,
        Case::PidP,
        Case::PidCombo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Case::Case1K3Only => "case1_K3_only",
            Case::Case2K1K3SameRule => "case2_K1K3_same_rule",
            Case::PidI => "pid_I",
            Case::PidD => "pid_D",
            Case::PidP => "pid_P",
            Case::PidCombo => "pid_combo",
        }
    }

    pub fn strategies(self) -> Strategies {
        let none = Strategies::NONE;
        match self {
            Case::Case1K3Only | Case::PidP => Strategies { proportional_k3: true, ..none },
            Case::Case2K1K3SameRule => Strategies {
                proportional_k3: true,
                same_rule_k1: true,
                ..none
            },
            Case::PidI => Strategies { integral_k1: true, ..none },
            Case::PidD => Strategies { differential_k2: true, ..none },
            Case::PidCombo => Strategies {
                integral_k1: true,
                proportional_k3: true,
                ..none
            },
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Case::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Case::ALL.iter().map(|c| c.name()).collect();
                format!("unknown case `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub wiring: WiringMode,
    pub all_ports: bool,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            layer_sizes: vec![196, 64, 32, 10],
            wiring: WiringMode::Random,
            all_ports: false,
            k1: 1.0,
            k2: 0.5,
            k3: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub horizon: f64,
    pub step: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { horizon: 5.0, step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub epochs: usize,
    pub target1: f64,
    pub target2: f64,
    pub kt: f64,
    pub signal_gate_eps: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub input_node: InputNodeRule,
    pub alignment_offset: isize,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    /// Reshuffle the training split at the start of every epoch.
    pub shuffle: bool,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            epochs: 10,
            target1: t.target1,
            target2: t.target2,
            kt: 100.0,
            signal_gate_eps: t.signal_gate_eps,
            k_min: 0.1,
            k_max: 2.0,
            input_node: t.input_node,
            alignment_offset: t.alignment_offset,
            fixed_point_tol: t.fixed_point.tol,
            fixed_point_max_iter: t.fixed_point.max_iter,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub images: PathBuf,
    pub labels: PathBuf,
    /// Mean-pooling factor applied to every image (1 = none).
    pub downsample: usize,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            images: PathBuf::from("data/mnist-subset/images-idx3-ubyte"),
            labels: PathBuf::from("data/mnist-subset/labels-idx1-ubyte"),
            downsample: 2,
            n_train: 1000,
            n_test: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Fill the `wall_time` column; off by default so reruns are byte-identical.
    pub record_wall_time: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub case: Case,
    pub network: NetworkSpec,
    pub sim: SimSpec,
    pub training: TrainingSpec,
    pub data: DataSpec,
    pub output: OutputSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "desk-mnist".into(),
            seed: 1,
            case: Case::Case1K3Only,
            network: NetworkSpec::default(),
            sim: SimSpec::default(),
            training: TrainingSpec::default(),
            data: DataSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec is always representable as TOML")
    }

    pub fn sim_config(&self) -> Result<SimConfig, HarnessError> {
        let sim = SimConfig::new(self.sim.horizon, self.sim.step).map_err(config_err)?;
        sim.steps().map_err(config_err)?;
        Ok(sim)
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            target1: t.target1,
            target2: t.target2,
            kt: t.kt,
            signal_gate_eps: t.signal_gate_eps,
            strategies: self.case.strategies(),
            epochs: t.epochs,
            bounds: ParamBounds { min: t.k_min, max: t.k_max },
            input_node: t.input_node,
            alignment_offset: t.alignment_offset,
            fixed_point: self.fixed_point_config(),
        }
    }

    pub fn fixed_point_config(&self) -> FixedPointConfig {
        FixedPointConfig {
            tol: self.training.fixed_point_tol,
            max_iter: self.training.fixed_point_max_iter,
        }
    }

    pub fn wiring(&self) -> Result<WiringOptions, HarnessError> {
        let n = &self.network;
        Ok(WiringOptions {
            mode: n.wiring,
            all_ports: n.all_ports,
            initial_params: NeuronParams::uniform(n.k1, n.k2, n.k3).map_err(config_err)?,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.sim_config()?;
        let train = self.training_config();
        train.validate().map_err(config_err)?;
        let wiring = self.wiring()?;
        if wiring.initial_params.validate(&train.bounds).is_err() {
            return Err(HarnessError::Config(format!(
                "initial parameters ({}, {}, {}) lie outside the clamp bounds [{}, {}]",
                self.network.k1, self.network.k2, self.network.k3, train.bounds.min, train.bounds.max
            )));
        }
        let layers = &self.network.layer_sizes;
        if layers.len() < 2 || layers.contains(&0) {
            return Err(HarnessError::Config(format!(
                "need at least two non-empty layers, got {layers:?}"
            )));
        }
        if self.data.n_test == 0 {
            return Err(HarnessError::Config("the test split needs at least one sample".into()));
        }
        if self.data.downsample == 0 {
            return Err(HarnessError::Config("downsample factor must be at least 1".into()));
        }
        Ok(())
    }
}

fn config_err(e: wuxing_core::WuxingError) -> HarnessError {
    HarnessError::Config(e.to_string())
}
