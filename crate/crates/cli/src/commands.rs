use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use ssrn_core::data::synth::{write_synthetic_set, SynthConfig};
use ssrn_core::data::{
    augment, load_manifest, load_pairs, mask_to_tensor, read_pnm, split_manifest, Manifest,
    SamplePair,
};
use ssrn_core::inference::{predict_file, read_saliency, saliency_to_pgm};
use ssrn_core::loss::LossConfig;
use ssrn_core::metrics::bench::{bench_runtime, image_paths};
use ssrn_core::metrics::{curve_to_csv, evaluate_image, ImageMetrics, MetricsReport};
use ssrn_core::modelio::{load_model, save_model};
use ssrn_core::optim::{train_loop, write_trace_csv, TrainConfig};
use ssrn_core::{Error, Network, NetworkConfig};

use crate::{BenchArgs, EvalArgs, PredictArgs, SynthArgs, TrainArgs};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::InvalidArgument(_) | Error::InvalidConfig(_) => EXIT_USAGE,
        Error::NonFinite(_) | Error::Diverged { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    if jobs == Some(0) {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::usage(format!("cannot start worker threads: {e}")))
}

fn stem(path: &Path) -> Result<String, Failure> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Failure::data(format!("{} has no usable file name", path.display())))
}

/// Maps each path to its file stem, rejecting stems that occur twice.
fn unique_stems<'a>(paths: impl Iterator<Item = &'a Path>) -> Result<Vec<String>, Failure> {
    let mut seen: HashMap<String, &Path> = HashMap::new();
    let mut out = Vec::new();
    for p in paths {
        let s = stem(p)?;
        if let Some(prev) = seen.insert(s.clone(), p) {
            return Err(Failure::data(format!(
                "{} and {} share the file stem {s:?}",
                prev.display(),
                p.display()
            )));
        }
        out.push(s);
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn emit_json(out: Option<&Path>, json: &str) -> CmdResult {
    match out {
        Some(p) => write_text(p, json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        base_lr: a.base_lr.unwrap_or(d.base_lr),
        step_size: a.step_size.unwrap_or(d.step_size),
        gamma: a.gamma.unwrap_or(d.gamma),
        momentum: a.momentum.unwrap_or(d.momentum),
        weight_decay: a.weight_decay.unwrap_or(d.weight_decay),
        max_iter: a.max_iter.unwrap_or(d.max_iter),
        validation_period: a.val_period.unwrap_or(d.validation_period),
        rng_seed: a.seed,
    }
}

fn prepare(set: &[SamplePair], a: &TrainArgs) -> Result<Vec<SamplePair>, Failure> {
    set.iter()
        .map(|p| a.input_mode.prepare(p).map_err(Failure::from))
        .collect()
}

pub fn train(a: &TrainArgs) -> CmdResult {
    require_file(&a.manifest, "manifest")?;
    if let Some(v) = &a.val_manifest {
        require_file(v, "validation manifest")?;
    }
    let net_cfg = NetworkConfig::preset(&a.preset)?;
    let cfg = train_config(a);
    cfg.validate()?;
    let loss = LossConfig::new(a.loss).with_beta(a.beta);
    loss.validate()?;

    let manifest = load_manifest(&a.manifest)?;
    let (train_m, val_m) = match &a.val_manifest {
        Some(v) => (manifest, load_manifest(v)?),
        None => split_manifest(&manifest, a.train_ratio, a.seed)?,
    };
    let mut train_set = load_pairs(&train_m)?;
    if !a.no_augment {
        train_set = augment(&train_set);
    }
    let train_set = prepare(&train_set, a)?;
    let val_set = prepare(&load_pairs(&val_m)?, a)?;
    info!(
        "training {} on {} samples ({} validation), loss {}, input {}",
        net_cfg.name,
        train_set.len(),
        val_set.len(),
        a.loss,
        a.input_mode
    );

    let trace_path = a
        .trace
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.trace.csv", a.out.display())));
    let mut net = Network::build(net_cfg, a.seed)?;
    let outcome = train_loop(&mut net, &train_set, &val_set, &loss, &cfg, |row| {
        if let Some(v) = row.val_loss {
            info!(
                "iter {:>6}  lr {:.2e}  train {:.6}  val {:.6}",
                row.iteration + 1,
                row.lr,
                row.train_loss,
                v
            );
        }
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            if let Error::Diverged { trace, .. } = &e {
                write_trace_csv(trace, &trace_path)?;
                warn!("partial trace written to {}", trace_path.display());
            }
            return Err(e.into());
        }
    };
    save_model(&net, &a.out)?;
    write_trace_csv(&outcome.trace, &trace_path)?;
    info!("model written to {}", a.out.display());
    if let Some(best_path) = &a.best_out {
        match &outcome.best {
            Some(best) => {
                save_model(&best.network, best_path)?;
                info!(
                    "best validation loss {:.6} at iteration {} written to {}",
                    best.val_loss,
                    best.iteration,
                    best_path.display()
                );
            }
            None => {
                save_model(&net, best_path)?;
                warn!(
                    "no validation ran; {} holds the final weights",
                    best_path.display()
                );
            }
        }
    }
    Ok(())
}

pub fn predict(a: &PredictArgs) -> CmdResult {
    require_file(&a.model, "model")?;
    let mut inputs: Vec<PathBuf> = Vec::new();
    if let Some(m) = &a.manifest {
        require_file(m, "manifest")?;
        inputs.extend(load_manifest(m)?.records.into_iter().map(|r| r.image));
    }
    inputs.extend(a.images.iter().cloned());
    if inputs.is_empty() {
        return Err(Failure::usage("no input images (pass files or --manifest)"));
    }
    let stems = unique_stems(inputs.iter().map(PathBuf::as_path))?;
    let net = load_model(&a.model)?;
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::data(format!("{}: {e}", a.out_dir.display())))?;

    let pool = thread_pool(a.jobs)?;
    let results: Vec<Result<(), Error>> = pool.install(|| {
        inputs
            .par_iter()
            .zip(&stems)
            .map(|(path, s)| {
                let map = predict_file(&net, path, a.input_mode)?;
                saliency_to_pgm(&map)?.write(&a.out_dir.join(format!("{s}.pgm")))
            })
            .collect()
    });
    let failures: Vec<(&PathBuf, Error)> = inputs
        .iter()
        .zip(results)
        .filter_map(|(p, r)| r.err().map(|e| (p, e)))
        .collect();
    for (p, e) in &failures {
        eprintln!("failed: {}: {e}", p.display());
    }
    info!(
        "predicted {} of {} images into {}",
        inputs.len() - failures.len(),
        inputs.len(),
        a.out_dir.display()
    );
    match failures.first() {
        None => Ok(()),
        Some((_, e)) => Err(Failure {
            code: exit_code(e),
            message: format!("{} of {} images failed", failures.len(), inputs.len()),
        }),
    }
}

fn read_mask(path: &Path) -> Result<ssrn_core::Tensor, Error> {
    mask_to_tensor(&read_pnm(path)?).map_err(|e| e.at_path(path))
}

fn score(stem: &str, prediction: &Path, mask: &Path) -> Result<ImageMetrics, Error> {
    let s = read_saliency(prediction)?;
    let gt = read_mask(mask)?;
    if s.shape() != gt.shape() {
        return Err(Error::DimensionMismatch {
            image: (s.shape()[2], s.shape()[1]),
            mask: (gt.shape()[2], gt.shape()[1]),
        }
        .at_path(prediction));
    }
    evaluate_image(stem, &s, &gt)
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    require_file(&a.manifest, "manifest")?;
    if !a.predictions.is_dir() {
        return Err(Failure::usage(format!(
            "prediction directory {} does not exist",
            a.predictions.display()
        )));
    }
    let manifest: Manifest = load_manifest(&a.manifest)?;
    let stems = unique_stems(manifest.records.iter().map(|r| r.image.as_path()))?;

    let mut matched = Vec::new();
    let mut missing = Vec::new();
    for (record, s) in manifest.records.iter().zip(&stems) {
        let pred = a.predictions.join(format!("{s}.pgm"));
        if pred.is_file() {
            matched.push((s.as_str(), pred, record.mask.as_path()));
        } else {
            missing.push(s.as_str());
        }
    }
    for s in &missing {
        eprintln!("missing prediction: {s}");
    }
    if matched.is_empty() {
        return Err(Failure::data(format!(
            "no prediction in {} matches the manifest",
            a.predictions.display()
        )));
    }

    let pool = thread_pool(a.jobs)?;
    let images = pool.install(|| {
        matched
            .par_iter()
            .map(|(s, pred, mask)| score(s, pred, mask))
            .collect::<Result<Vec<_>, Error>>()
    })?;
    let report = MetricsReport::from_images(images, a.runtime)?;
    if let Some(dir) = &a.curves_dir {
        write_text(&dir.join("mean.csv"), &curve_to_csv(&report.mean_curve))?;
        for m in &report.images {
            write_text(
                &dir.join(format!("{}.csv", m.name)),
                &curve_to_csv(&m.curve),
            )?;
        }
    }
    emit_json(a.out.as_deref(), &report.to_json())?;
    info!(
        "{} images: auc {:.4}  max-F {:.4}  mae {:.4}",
        report.image_count, report.auc, report.max_f, report.mae
    );
    if !missing.is_empty() && !a.allow_missing {
        return Err(Failure::data(format!(
            "{} manifest entries have no prediction (use --allow-missing to score the rest)",
            missing.len()
        )));
    }
    Ok(())
}

pub fn bench(a: &BenchArgs) -> CmdResult {
    require_file(&a.model, "model")?;
    require_file(&a.manifest, "manifest")?;
    if a.repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    let net = load_model(&a.model)?;
    let manifest = load_manifest(&a.manifest)?;
    let report = bench_runtime(&net, &image_paths(&manifest), a.repeats, a.input_mode)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    emit_json(a.out.as_deref(), &json)?;
    info!(
        "{} runs: mean {:.3} ms, min {:.3} ms, max {:.3} ms",
        report.n,
        report.mean_seconds * 1e3,
        report.min_seconds * 1e3,
        report.max_seconds * 1e3
    );
    Ok(())
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    if a.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let cfg = SynthConfig {
        width: a.width,
        height: a.height,
        ..SynthConfig::default()
    };
    let m = write_synthetic_set(&a.out_dir, &a.prefix, a.count, &cfg, a.seed)?;
    println!("{}", m.source.display());
    Ok(())
}
