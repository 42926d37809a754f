//! Train / eval / inspect entry points shared by the binary and the tests.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wuxing_core::mnist::{self, stream, Sample};
use wuxing_core::neuron::{analytic_guess, residual_norm, settle};
use wuxing_core::topology::build_network_with;
use wuxing_core::trainer::{evaluate, output_error, EvalReport};
use wuxing_core::{
    classify, forward_pass, train_epoch, Direction, ElementVector, FixedPointConfig, Network,
    NeuronParams, WuxingError,
};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentSpec;
use crate::HarnessError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_HEADER: &str =
    "epoch,train_acc,test_acc,mean_abs_error,updated_neurons,clamp_events,wall_time";

/// Stream id of the generator that orders training samples, kept apart from
/// the one used for the split and the wiring.
const ORDER_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    /// Online accuracy while training (epoch 0: plain forward passes).
    pub train_acc: f64,
    pub test_acc: f64,
    pub mean_abs_error: f64,
    pub updated_neurons: usize,
    pub clamp_events: usize,
    /// Seconds since the start of the run, or 0 when not recorded.
    pub wall_time: f64,
}

impl EpochRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.9},{},{},{:.3}",
            self.epoch,
            self.train_acc,
            self.test_acc,
            self.mean_abs_error,
            self.updated_neurons,
            self.clamp_events,
            self.wall_time
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train or test)")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, which: Split) -> &[Sample] {
        match which {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

/// Reads both IDX files, pools the images and draws the seeded split.
pub fn load_dataset(spec: &ExperimentSpec) -> Result<Dataset, HarnessError> {
    let d = &spec.data;
    let mut images = mnist::load_images(&d.images).map_err(|e| with_path(e, &d.images))?;
    let labels = mnist::load_labels(&d.labels).map_err(|e| with_path(e, &d.labels))?;
    if d.downsample > 1 {
        images = mnist::downsample(&images, d.downsample).map_err(config_err)?;
    }
    let inputs = spec.network.layer_sizes[0];
    if images.pixels_per_image() != inputs {
        return Err(HarnessError::Config(format!(
            "{}x{} images do not fit an input layer of {inputs} neurons",
            images.rows, images.cols
        )));
    }
    let (train, test) =
        mnist::make_split(&images, &labels, d.n_train, d.n_test, spec.seed).map_err(config_err)?;
    Ok(Dataset { train, test })
}

pub fn build_network(spec: &ExperimentSpec) -> Result<Network, HarnessError> {
    let graph = build_network_with(&spec.network.layer_sizes, &spec.wiring()?, spec.seed)
        .map_err(config_err)?;
    Ok(Network::new(graph, &spec.fixed_point_config())?)
}

fn with_path(e: WuxingError, path: &Path) -> HarnessError {
    match e {
        WuxingError::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => HarnessError::Config(format!("{}: {other}", path.display())),
    }
}

fn config_err(e: WuxingError) -> HarnessError {
    HarnessError::Config(e.to_string())
}

/// Accuracy and mean absolute class error of the untouched network.
fn baseline(net: &Network, data: &[Sample], spec: &ExperimentSpec) -> Result<(f64, f64), HarnessError> {
    let sim = spec.sim_config()?;
    let cfg = spec.training_config();
    let (mut correct, mut err) = (0usize, 0.0);
    for s in data {
        let fwd = forward_pass(net, &s.features, &sim)?;
        if classify(&fwd.leb) == Some(s.label) {
            correct += 1;
        }
        let e = output_error(&fwd.leb, s.label, &cfg)?;
        err += e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64;
    }
    let n = data.len().max(1) as f64;
    Ok((correct as f64 / n, err / n))
}

/// Runs the untrained evaluation and then `spec.training.epochs` epochs,
/// handing every row to `emit` as soon as it is complete. Returns the word
/// position of the sample-order generator.
pub fn train_loop(
    spec: &ExperimentSpec,
    net: &mut Network,
    data: &Dataset,
    mut emit: impl FnMut(&EpochRow) -> Result<(), HarnessError>,
) -> Result<u128, HarnessError> {
    let sim = spec.sim_config()?;
    let cfg = spec.training_config();
    let start = Instant::now();
    let clock = |t: &Instant| {
        if spec.output.record_wall_time {
            t.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };

    let (train_acc, mean_abs_error) = baseline(net, &data.train, spec)?;
    let test = evaluate(net, stream(&data.test), &sim)?;
    emit(&EpochRow {
        epoch: 0,
        train_acc,
        test_acc: test.accuracy,
        mean_abs_error,
        updated_neurons: 0,
        clamp_events: 0,
        wall_time: clock(&start),
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(ORDER_STREAM);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=spec.training.epochs {
        if spec.training.shuffle {
            order.shuffle(&mut rng);
        }
        let samples = order.iter().map(|&i| (data.train[i].features.as_slice(), data.train[i].label));
        let m = train_epoch(net, samples, &cfg, &sim).map_err(|a| HarnessError::Divergence {
            epoch,
            sample: a.sample,
            source: a.source,
        })?;
        let test = evaluate(net, stream(&data.test), &sim)?;
        let row = EpochRow {
            epoch,
            train_acc: m.accuracy(),
            test_acc: test.accuracy,
            mean_abs_error: m.mean_abs_error(),
            updated_neurons: m.updated_neurons,
            clamp_events: m.clamp_events,
            wall_time: clock(&start),
        };
        info!(
            "epoch {epoch}: train {:.3} test {:.3} updated {} clamped {} rolled back {}",
            row.train_acc, row.test_acc, row.updated_neurons, row.clamp_events, m.fixed_point_failures
        );
        emit(&row)?;
    }
    Ok(rng.get_word_pos())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rows: Vec<EpochRow>,
    pub out_dir: PathBuf,
    pub checkpoint: Checkpoint,
}

/// Full experiment: config echo, per-epoch `metrics.csv` (flushed row by
/// row, so a diverged run keeps its completed epochs) and a final
/// checkpoint.
pub fn run_train(spec: &ExperimentSpec) -> Result<TrainOutcome, HarnessError> {
    spec.validate()?;
    let dir = spec.output.dir.clone();
    fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    let echo = dir.join(CONFIG_ECHO_FILE);
    fs::write(&echo, spec.to_toml()).map_err(HarnessError::io(&echo))?;

    let data = load_dataset(spec)?;
    let mut net = build_network(spec)?;
    info!(
        "{}: {} neurons, {} edges, {} train / {} test samples",
        spec.name,
        net.neuron_count(),
        net.graph().edges.len(),
        data.train.len(),
        data.test.len()
    );

    let path = dir.join(METRICS_FILE);
    let mut csv = BufWriter::new(File::create(&path).map_err(HarnessError::io(&path))?);
    writeln!(csv, "{METRICS_HEADER}").map_err(HarnessError::io(&path))?;
    let mut rows = Vec::new();
    let word_pos = train_loop(spec, &mut net, &data, |row| {
        writeln!(csv, "{}", row.to_csv())
            .and_then(|_| csv.flush())
            .map_err(HarnessError::io(&path))?;
        rows.push(row.clone());
        Ok(())
    })?;

    let checkpoint = Checkpoint::new(&net, spec.seed, spec.training.epochs, word_pos);
    checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    Ok(TrainOutcome {
        rows,
        out_dir: dir,
        checkpoint,
    })
}

/// Forward-only evaluation of a checkpoint on one split of the spec's data.
pub fn run_eval(
    checkpoint: &Checkpoint,
    spec: &ExperimentSpec,
    split: Split,
) -> Result<EvalReport, HarnessError> {
    let net = checkpoint.network()?;
    if net.graph().layer_sizes != spec.network.layer_sizes {
        return Err(HarnessError::Checkpoint(format!(
            "graph mismatch: checkpoint layers {:?}, spec layers {:?}",
            net.graph().layer_sizes,
            spec.network.layer_sizes
        )));
    }
    let data = load_dataset(spec)?;
    let samples = data.split(split);
    if samples.is_empty() {
        return Err(HarnessError::Config(format!("the {split} split is empty")));
    }
    Ok(evaluate(&net, stream(samples), &spec.sim_config()?)?)
}

/// Equilibria of one neuron in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub neuron: usize,
    pub analytic: ElementVector,
    pub forward: Result<(ElementVector, f64), String>,
    pub inverse: Result<(ElementVector, f64), String>,
}

/// Settles `p` from its analytic estimate in both directions.
pub fn inspect_params(
    neuron: usize,
    p: &NeuronParams,
    cfg: &FixedPointConfig,
) -> Result<FixedPointReport, HarnessError> {
    p.check_positive().map_err(config_err)?;
    let analytic = analytic_guess(Direction::Forward, p).map_err(config_err)?;
    let solve = |dir| -> Result<(ElementVector, f64), String> {
        let guess = analytic_guess(dir, p).map_err(|e| e.to_string())?;
        settle(dir, p, &guess, cfg)
            .map(|s| (s.point.b0, s.residual))
            .map_err(|e| e.to_string())
    };
    Ok(FixedPointReport {
        neuron,
        analytic,
        forward: solve(Direction::Forward),
        inverse: solve(Direction::Inverse),
    })
}

/// Stored equilibria of every neuron with their residual derivative norms.
pub fn inspect_checkpoint(ck: &Checkpoint) -> Result<Vec<FixedPointReport>, HarnessError> {
    let net = ck.network()?;
    net.params()
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let f = net.forward_fixed_points()[n];
            let b = net.backward_fixed_points()[n];
            Ok(FixedPointReport {
                neuron: n,
                analytic: analytic_guess(Direction::Forward, p).map_err(config_err)?,
                forward: Ok((f, residual_norm(Direction::Forward, &f, p))),
                inverse: Ok((b, residual_norm(Direction::Inverse, &b, p))),
            })
        })
        .collect()
}

impl fmt::Display for FixedPointReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = |e: &ElementVector| {
            e.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(" ")
        };
        writeln!(f, "neuron {}", self.neuron)?;
        writeln!(f, "  analytic  {}", v(&self.analytic))?;
        for (name, r) in [("forward", &self.forward), ("inverse", &self.inverse)] {
            match r {
                Ok((b0, res)) => writeln!(f, "  {name:<9} {}  residual {res:.3e}", v(b0))?,
                Err(e) => writeln!(f, "  {name:<9} failed: {e}")?,
            }
        }
        Ok(())
    }
}
