//! The work behind each subcommand. Every command writes the resolved
//! configuration to `config.cfg` in its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use vhd_core::synth::{gen_synthetic_corpus, Split, SynthSpec};
use vhd_core::train::epoch_means;
use vhd_core::Real;

use crate::config::{Precision, RunConfig, TrainKind};
use crate::error::{Result, VhdError};
use crate::experiment::{self, default_mode, score_all, Corpora};
use crate::formats::checkpoint::{load_checkpoint, save_checkpoint};
use crate::formats::features::write_feature_file;
use crate::formats::manifest::{load_corpus, Manifest, ManifestEntry};
use crate::formats::tables::{
    metrics_to_text, scores_to_text, sweep_to_text, write_annotations, write_loss_log,
};
use crate::formats::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const CONFIG_FILE: &str = "config.cfg";
pub const CHECKPOINT_FILE: &str = "model.shlc";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

/// Creates the output directory, refusing a non-empty one unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if let Ok(mut it) = fs::read_dir(dir) {
        if it.next().is_some() && !force {
            return Err(VhdError::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| VhdError::io(dir, e))
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    write_atomic(&cfg.out_dir.join(CONFIG_FILE), cfg.to_text().as_bytes())
}

fn manifest(cfg: &RunConfig) -> Result<Manifest> {
    let path = cfg
        .manifest
        .as_deref()
        .ok_or_else(|| VhdError::Config("manifest must be set".into()))?;
    Manifest::load(path)
}

/// Writes a synthetic corpus: features, annotations and a manifest. Train
/// videos of `target_category`, when set, are listed without annotations.
pub fn gen_synth(cfg: &RunConfig, force: bool) -> Result<PathBuf> {
    let spec = SynthSpec::orthogonal(&cfg.synth, cfg.seed)?;
    let corpus = gen_synthetic_corpus(&spec, cfg.seed)?;
    for w in &corpus.warnings {
        warn!("{w}");
    }
    prepare_out_dir(&cfg.out_dir, force)?;
    let out = &cfg.out_dir;
    let mut m = Manifest::default();
    for (v, t) in corpus.videos.iter().zip(&corpus.truth) {
        let features = out.join("features").join(format!("{}.vhdf", v.video_id));
        write_feature_file(v, &features)?;
        let unlabeled =
            t.split == Split::Train && cfg.target_category.as_deref() == Some(v.category.as_str());
        let annotations = match v.labels() {
            Some(l) if !unlabeled => {
                let p = out.join("annotations").join(format!("{}.txt", v.video_id));
                write_annotations(&p, l)?;
                Some(p)
            }
            _ => None,
        };
        m.entries.push(ManifestEntry {
            split: t.split,
            category: v.category.clone(),
            features,
            annotations,
        });
    }
    let path = out.join(MANIFEST_FILE);
    m.write(&path)?;
    echo_config(cfg)?;
    info!("wrote {} videos to {}", corpus.videos.len(), out.display());
    Ok(path)
}

fn train_typed<T: Real>(cfg: &RunConfig, kind: TrainKind, corpora: &Corpora) -> Result<()> {
    let out = experiment::train::<T>(cfg, kind, corpora)?;
    save_checkpoint(&out.params, &cfg.out_dir.join(CHECKPOINT_FILE))?;
    write_loss_log(&cfg.out_dir.join(LOSS_LOG_FILE), &out.log)?;
    let means = epoch_means(&out.log);
    if let (Some(first), Some(last)) = (means.first(), means.last()) {
        info!(
            "mean loss {first:.6} (epoch 0) -> {last:.6} (epoch {})",
            means.len() - 1
        );
    }
    Ok(())
}

/// Trains a single-head (sl) or dual-head (dl) model from the manifest's
/// train split and writes a checkpoint and loss log.
pub fn train(cfg: &RunConfig, kind: TrainKind, force: bool) -> Result<()> {
    let m = manifest(cfg)?;
    let corpora = Corpora::from_manifest(cfg, &m, kind)?;
    prepare_out_dir(&cfg.out_dir, force)?;
    echo_config(cfg)?;
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg, kind, &corpora),
        Precision::F64 => train_typed::<f64>(cfg, kind, &corpora),
    }
}

fn score_typed<T: Real>(cfg: &RunConfig, with_metrics: bool) -> Result<()> {
    let ckpt = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| VhdError::Config("checkpoint must be set".into()))?;
    let params = load_checkpoint::<T>(ckpt, &cfg.model_config())?;
    let mode = cfg.score_mode.unwrap_or_else(|| default_mode(&params));
    let m = manifest(cfg)?;
    let videos = load_corpus(&m, cfg.eval_split, None)?;
    if videos.is_empty() {
        return Err(VhdError::Config(format!(
            "manifest has no {} videos",
            cfg.eval_split.name()
        )));
    }
    let tracks = score_all(&params, &videos, cfg.set_size, mode)?;
    write_atomic(&cfg.out_dir.join(SCORES_FILE), scores_to_text(&tracks).as_bytes())?;
    if with_metrics {
        info!("mAP is standard per-video average precision; top-k mAP truncates each ranking to k segments");
        let rows = experiment::metrics(&tracks, &videos, cfg.binarize_threshold, cfg.top_k)?;
        for r in &rows {
            info!("{} {} = {:.4}", r.metric, r.category, r.value);
        }
        write_atomic(&cfg.out_dir.join(METRICS_FILE), metrics_to_text(&rows).as_bytes())?;
    }
    Ok(())
}

/// Scores every video of the evaluation split; `eval` also writes metrics.
pub fn score(cfg: &RunConfig, with_metrics: bool, force: bool) -> Result<()> {
    prepare_out_dir(&cfg.out_dir, force)?;
    echo_config(cfg)?;
    match cfg.precision {
        Precision::F32 => score_typed::<f32>(cfg, with_metrics),
        Precision::F64 => score_typed::<f64>(cfg, with_metrics),
    }
}

/// One seeded train-and-evaluate run per sweep value; writes `value,map`.
pub fn sweep(cfg: &RunConfig, force: bool) -> Result<Vec<(f64, f64)>> {
    for &v in &cfg.sweep_values {
        let point = experiment::sweep_point(cfg, v)?;
        let tc = point.train_config();
        match cfg.sweep_mode {
            TrainKind::Sl => tc.validate_sl()?,
            TrainKind::Dl => tc.validate_dl()?,
        }
    }
    let m = manifest(cfg)?;
    let corpora = Corpora::from_manifest(cfg, &m, cfg.sweep_mode)?;
    prepare_out_dir(&cfg.out_dir, force)?;
    echo_config(cfg)?;
    let rows = match cfg.precision {
        Precision::F32 => experiment::sweep::<f32>(cfg, &corpora)?,
        Precision::F64 => experiment::sweep::<f64>(cfg, &corpora)?,
    };
    write_atomic(&cfg.out_dir.join(SWEEP_FILE), sweep_to_text(&rows).as_bytes())?;
    Ok(rows)
}
