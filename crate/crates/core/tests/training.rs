mod common;

use ssrn_core::data::synth::{write_synthetic_set, SynthConfig};
use ssrn_core::data::{load_pairs, InputMode};
use ssrn_core::loss::{LossConfig, LossKind};
use ssrn_core::metrics::bench::{bench_runtime, image_paths};
use ssrn_core::optim::{mean_loss, trace_to_csv, train_loop, TrainConfig};
use ssrn_core::{Error, Network, NetworkConfig};

fn tiny_sets(
    dir: &std::path::Path,
) -> (
    Vec<ssrn_core::data::SamplePair>,
    Vec<ssrn_core::data::SamplePair>,
) {
    let cfg = SynthConfig {
        width: 24,
        height: 24,
        ..SynthConfig::default()
    };
    let train = write_synthetic_set(dir, "train", 12, &cfg, 1).unwrap();
    let val = write_synthetic_set(dir, "val", 4, &cfg, 2).unwrap();
    (load_pairs(&train).unwrap(), load_pairs(&val).unwrap())
}

fn config(max_iter: usize) -> TrainConfig {
    TrainConfig {
        max_iter,
        step_size: 100,
        validation_period: 20,
        rng_seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val) = tiny_sets(dir.path());
    let loss = LossConfig::new(LossKind::WeightedSmoothL1);
    let run = || {
        let mut net = Network::build(NetworkConfig::micro(), 1).unwrap();
        let before = mean_loss(&net, &val, &loss).unwrap();
        let out = train_loop(&mut net, &train, &val, &loss, &config(120), |_| {}).unwrap();
        (before, mean_loss(&net, &val, &loss).unwrap(), out)
    };
    let (before, after, out) = run();
    let (_, after2, out2) = run();
    assert_eq!(out.trace, out2.trace);
    assert_eq!(after, after2);
    assert!(after < before, "{before} -> {after}");
    assert_eq!(out.trace.len(), 120);
    assert_eq!(out.trace.iter().filter(|r| r.val_loss.is_some()).count(), 6);
    let best = out.best.unwrap();
    let best_val = out
        .trace
        .iter()
        .filter_map(|r| r.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best.val_loss, best_val);
    assert_eq!(mean_loss(&best.network, &val, &loss).unwrap(), best_val);
    let csv = trace_to_csv(&out.trace);
    assert_eq!(csv.lines().count(), 121);
}

#[test]
fn exploding_learning_rate_reports_divergence_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val) = tiny_sets(dir.path());
    let mut net = Network::build(NetworkConfig::micro(), 1).unwrap();
    let cfg = TrainConfig {
        base_lr: 1e6,
        ..config(200)
    };
    let loss = LossConfig::new(LossKind::Euclidean);
    match train_loop(&mut net, &train, &val, &loss, &cfg, |_| {}) {
        Err(Error::Diverged {
            iteration, trace, ..
        }) => {
            assert_eq!(trace.len(), iteration);
        }
        other => panic!(
            "expected divergence, got {:?}",
            other.map(|o| o.trace.len())
        ),
    }
}

#[test]
fn every_loss_kind_trains() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val) = tiny_sets(dir.path());
    for kind in [
        LossKind::WeightedSmoothL1,
        LossKind::Euclidean,
        LossKind::CrossEntropy,
    ] {
        let mut net = Network::build(NetworkConfig::micro(), 2).unwrap();
        let out = train_loop(
            &mut net,
            &train,
            &val,
            &LossConfig::new(kind),
            &config(40),
            |_| {},
        )
        .unwrap();
        assert!(out.trace.iter().all(|r| r.train_loss.is_finite()), "{kind}");
    }
}

#[test]
fn bench_report_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_synthetic_set(dir.path(), "b", 3, &SynthConfig::default(), 5).unwrap();
    let net = Network::build(NetworkConfig::micro(), 0).unwrap();
    let r = bench_runtime(&net, &image_paths(&m), 2, InputMode::FullResolution).unwrap();
    assert_eq!((r.images, r.repeats, r.n), (3, 2, 6));
    assert!(r.min_seconds <= r.mean_seconds && r.mean_seconds <= r.max_seconds);
    assert!(bench_runtime(&net, &image_paths(&m), 0, InputMode::FullResolution).is_err());
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["input_mode"], "full-resolution");
}

#[test]
fn late_training_loss_is_below_early_loss() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        width: 32,
        height: 32,
        ..SynthConfig::default()
    };
    let set = load_pairs(&write_synthetic_set(dir.path(), "blob", 10, &cfg, 8).unwrap()).unwrap();
    let mut net = Network::build(NetworkConfig::micro(), 4).unwrap();
    let tc = TrainConfig {
        max_iter: 500,
        rng_seed: 4,
        ..TrainConfig::default()
    };
    let loss = LossConfig::new(LossKind::WeightedSmoothL1);
    let out = train_loop(&mut net, &set, &[], &loss, &tc, |_| {}).unwrap();
    let mean = |rows: &[ssrn_core::optim::TraceRow]| {
        rows.iter().map(|r| r.train_loss).sum::<f64>() / rows.len() as f64
    };
    let early = mean(&out.trace[..100]);
    let late = mean(&out.trace[400..]);
    assert!(late < early, "{early} -> {late}");
    assert!(out.best.is_none());
}

#[test]
fn zero_iterations_leave_the_network_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val) = tiny_sets(dir.path());
    let mut net = Network::build(NetworkConfig::micro(), 9).unwrap();
    let before = ssrn_core::modelio::encode_model(&net);
    let loss = LossConfig::new(LossKind::WeightedSmoothL1);
    let out = train_loop(&mut net, &train, &val, &loss, &config(0), |_| {}).unwrap();
    assert!(out.trace.is_empty());
    assert_eq!(ssrn_core::modelio::encode_model(&net), before);
}
