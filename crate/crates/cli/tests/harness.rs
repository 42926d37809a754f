use std::fs;
use std::path::Path;
use std::process::Command;

use wuxing_cli::harness::{inspect_checkpoint, inspect_params, CHECKPOINT_FILE, METRICS_FILE, METRICS_HEADER};
use wuxing_cli::{run_eval, run_train, Case, Checkpoint, ExperimentSpec, HarnessError, Split};
use wuxing_core::mnist::{serialize_idx_images, serialize_idx_labels, ImageSet, LabelSet};
use wuxing_core::{ElementVector, FixedPointConfig, NeuronParams};

/// 4x4 images: a bright row whose position is the label (4 classes).
fn write_toy_idx(dir: &Path, count: usize) {
    let mut pixels = Vec::with_capacity(count * 16);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 4;
        for r in 0..4 {
            for c in 0..4 {
                let on = r == label;
                let jitter = ((i * 7 + c * 3) % 5) as f32 / 40.0;
                pixels.push(if on { 0.9 - jitter } else { jitter });
            }
        }
        labels.push(label as u8);
    }
    let images = ImageSet { count, rows: 4, cols: 4, pixels };
    fs::write(dir.join("images"), serialize_idx_images(&images)).unwrap();
    fs::write(dir.join("labels"), serialize_idx_labels(&LabelSet { count, labels })).unwrap();
}

fn toy_spec(dir: &Path, out: &str) -> ExperimentSpec {
    let mut spec = ExperimentSpec::default();
    spec.network.layer_sizes = vec![16, 6, 4];
    spec.sim.horizon = 2.0;
    spec.sim.step = 0.05;
    spec.training.epochs = 2;
    spec.data.images = dir.join("images");
    spec.data.labels = dir.join("labels");
    spec.data.downsample = 1;
    spec.data.n_train = 24;
    spec.data.n_test = 12;
    spec.output.dir = dir.join(out);
    spec
}

#[test]
fn zero_epochs_write_only_the_untrained_row() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_idx(tmp.path(), 40);
    let mut spec = toy_spec(tmp.path(), "zero");
    spec.training.epochs = 0;
    let out = run_train(&spec).unwrap();
    let csv = fs::read_to_string(out.out_dir.join(METRICS_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], METRICS_HEADER);
    assert!(lines[1].starts_with("0,"));
    assert!(lines[1].ends_with(",0,0,0.000"));
    let echo = fs::read_to_string(out.out_dir.join("config.toml")).unwrap();
    assert_eq!(ExperimentSpec::from_toml(&echo).unwrap(), spec);
}

#[test]
fn reruns_produce_identical_metrics_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_idx(tmp.path(), 40);
    let a = run_train(&toy_spec(tmp.path(), "a")).unwrap();
    let b = run_train(&toy_spec(tmp.path(), "b")).unwrap();
    let read = |d: &Path| fs::read(d.join(METRICS_FILE)).unwrap();
    assert_eq!(read(&a.out_dir), read(&b.out_dir));
    assert_eq!(a.rows.len(), 3);
    assert_eq!(
        fs::read(a.out_dir.join(CHECKPOINT_FILE)).unwrap(),
        fs::read(b.out_dir.join(CHECKPOINT_FILE)).unwrap()
    );
}

#[test]
fn integral_and_proportional_runs_give_comparable_curves() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_idx(tmp.path(), 40);
    let mut rows = Vec::new();
    for (case, out) in [(Case::PidI, "pid_i"), (Case::PidP, "pid_p")] {
        let mut spec = toy_spec(tmp.path(), out);
        spec.case = case;
        let run = run_train(&spec).unwrap();
        rows.push(run.rows);
    }
    assert_eq!(rows[0].len(), rows[1].len());
    // Identical before training, different once the strategies act.
    assert_eq!(rows[0][0], rows[1][0]);
    assert_ne!(rows[0][1..], rows[1][1..]);
}

#[test]
fn eval_is_repeatable_and_checks_its_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_idx(tmp.path(), 40);
    let spec = toy_spec(tmp.path(), "eval");
    let trained = run_train(&spec).unwrap();
    let ck = Checkpoint::load(&trained.out_dir.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck, trained.checkpoint);

    let a = run_eval(&ck, &spec, Split::Test).unwrap();
    let b = run_eval(&ck, &spec, Split::Test).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.samples, 12);
    assert_eq!(a.accuracy, trained.rows.last().unwrap().test_acc);
    assert_eq!(Checkpoint::load(&trained.out_dir.join(CHECKPOINT_FILE)).unwrap(), ck);

    let mut empty = spec.clone();
    empty.data.n_train = 0;
    assert!(matches!(run_eval(&ck, &empty, Split::Train), Err(HarnessError::Config(_))));

    let mut other = spec.clone();
    other.network.layer_sizes = vec![16, 5, 4];
    assert!(matches!(run_eval(&ck, &other, Split::Test), Err(HarnessError::Checkpoint(_))));

    let mut broken = ck.clone();
    broken.forward_fixed_points.pop();
    assert!(matches!(broken.network(), Err(HarnessError::Checkpoint(_))));
    let mut future = ck.clone();
    future.version += 1;
    assert!(Checkpoint::from_json(&future.to_json()).is_err());
}

#[test]
fn trained_checkpoint_rests_at_its_fixed_points() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_idx(tmp.path(), 40);
    let spec = toy_spec(tmp.path(), "fp");
    let trained = run_train(&spec).unwrap();
    let tol = spec.training.fixed_point_tol;
    for r in inspect_checkpoint(&trained.checkpoint).unwrap() {
        let (_, f) = r.forward.as_ref().unwrap();
        let (_, b) = r.inverse.as_ref().unwrap();
        assert!(*f < tol && *b < tol, "neuron {}: {f:e} {b:e}", r.neuron);
    }
}

#[test]
fn inspecting_default_and_degenerate_parameters() {
    let cfg = FixedPointConfig::default();
    let r = inspect_params(0, &NeuronParams::default(), &cfg).unwrap();
    assert_eq!(r.analytic, ElementVector::splat(1.0));
    let (b0, res) = r.forward.unwrap();
    assert!((b0 - ElementVector::splat(1.0)).max_abs() < 1e-8);
    assert!(res < 1e-8);

    let flat = NeuronParams::uniform(0.4, 0.4, 0.9).unwrap();
    let r = inspect_params(0, &flat, &cfg).unwrap();
    assert_eq!(r.analytic, ElementVector::zeros());
}

fn wuxing(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_wuxing"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn binary_subcommands_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_idx(tmp.path(), 40);
    let spec = toy_spec(tmp.path(), "cli");
    fs::write(tmp.path().join("exp.toml"), spec.to_toml()).unwrap();

    let (code, text) = wuxing(&["gen-config"], tmp.path());
    assert_eq!(code, 0);
    assert_eq!(ExperimentSpec::from_toml(&text).unwrap(), ExperimentSpec::default());

    let (code, _) = wuxing(&["--config", "exp.toml", "--seed", "3", "--case", "pid_combo", "train"], tmp.path());
    assert_eq!(code, 0);
    let echo = fs::read_to_string(tmp.path().join("cli/config.toml")).unwrap();
    let echoed = ExperimentSpec::from_toml(&echo).unwrap();
    assert_eq!((echoed.seed, echoed.case), (3, Case::PidCombo));

    let (code, text) = wuxing(&["--config", "exp.toml", "--seed", "3", "eval"], tmp.path());
    assert_eq!(code, 0);
    assert!(text.contains("confusion"));

    let (code, text) = wuxing(&["inspect-fixed-point", "--k1", "1", "--k2", "0.5", "--k3", "0.5"], tmp.path());
    assert_eq!(code, 0);
    assert!(text.contains("analytic  1.0000000000"));

    let (code, _) = wuxing(&["--config", "missing.toml", "train"], tmp.path());
    assert_eq!(code, 2);
    fs::write(tmp.path().join("bad.toml"), "[sim]\nstep = -1.0\n").unwrap();
    let (code, _) = wuxing(&["--config", "bad.toml", "train"], tmp.path());
    assert_eq!(code, 2);
    let (code, _) = wuxing(&["--case", "case3", "train"], tmp.path());
    assert_eq!(code, 2);

    // A drive far beyond the rest state blows the dynamics up.
    let mut wild = spec.clone();
    wild.output.dir = tmp.path().join("wild");
    wild.network.k1 = 2.0;
    wild.network.k2 = 1.9;
    wild.network.k3 = 1.9;
    wild.training.k_max = 10.0;
    wild.sim.horizon = 20.0;
    wild.sim.step = 0.5;
    fs::write(tmp.path().join("wild.toml"), wild.to_toml()).unwrap();
    let (code, _) = wuxing(&["--config", "wild.toml", "train"], tmp.path());
    assert_eq!(code, 3);
    let csv = fs::read_to_string(tmp.path().join("wild/metrics.csv")).unwrap();
    assert!(csv.starts_with(METRICS_HEADER));
}
