//! Train-then-evaluate runs over in-memory corpora, shared by the CLI
//! commands and sweeps.

use std::thread;

use log::warn;
use vhd_core::data::VideoFeatures;
use vhd_core::eval::{mean_ap, score_video, top_k_map, ScoreMode, ScoreTrack};
use vhd_core::model::{HeadRole, ModelParams};
use vhd_core::synth::{Split, SynthCorpus};
use vhd_core::train::{train_dl, train_sl, TrainOutcome};
use vhd_core::Real;

use crate::config::{RunConfig, SweepAxis, TrainKind};
use crate::error::{Result, VhdError};
use crate::formats::manifest::{load_corpus, Manifest};
use crate::formats::tables::MetricRow;

/// Videos used by one run.
#[derive(Clone, Debug, Default)]
pub struct Corpora {
    /// Labeled training videos (the source category in dual mode).
    pub train: Vec<VideoFeatures>,
    /// Target-category training videos; labels are stripped on load.
    pub target: Vec<VideoFeatures>,
    /// Videos scored after training.
    pub eval: Vec<VideoFeatures>,
}

fn require<'a>(what: &str, v: &'a Option<String>) -> Result<&'a str> {
    v.as_deref()
        .ok_or_else(|| VhdError::Config(format!("{what} must be set for dual training")))
}

fn strip_labels(videos: Vec<VideoFeatures>) -> Vec<VideoFeatures> {
    videos.iter().map(VideoFeatures::without_labels).collect()
}

impl Corpora {
    pub fn from_manifest(cfg: &RunConfig, manifest: &Manifest, kind: TrainKind) -> Result<Self> {
        Ok(match kind {
            TrainKind::Sl => {
                let cat = cfg.source_category.as_deref();
                Corpora {
                    train: load_corpus(manifest, Split::Train, cat)?,
                    target: Vec::new(),
                    eval: load_corpus(manifest, cfg.eval_split, cat)?,
                }
            }
            TrainKind::Dl => {
                let src = require("source_category", &cfg.source_category)?;
                let tgt = require("target_category", &cfg.target_category)?;
                Corpora {
                    train: load_corpus(manifest, Split::Train, Some(src))?,
                    target: strip_labels(load_corpus(manifest, Split::Train, Some(tgt))?),
                    eval: load_corpus(manifest, cfg.eval_split, Some(tgt))?,
                }
            }
        })
    }

    /// Same selection as [`Corpora::from_manifest`] on a generated corpus.
    pub fn from_synth(cfg: &RunConfig, corpus: &SynthCorpus, kind: TrainKind) -> Result<Self> {
        let pick = |cat: Option<&str>, split: Split| -> Vec<VideoFeatures> {
            match cat {
                Some(c) => corpus.select(c, split),
                None => cfg
                    .synth
                    .categories
                    .iter()
                    .flat_map(|c| corpus.select(c, split))
                    .collect(),
            }
        };
        Ok(match kind {
            TrainKind::Sl => {
                let cat = cfg.source_category.as_deref();
                Corpora {
                    train: pick(cat, Split::Train),
                    target: Vec::new(),
                    eval: pick(cat, cfg.eval_split),
                }
            }
            TrainKind::Dl => {
                let src = require("source_category", &cfg.source_category)?;
                let tgt = require("target_category", &cfg.target_category)?;
                Corpora {
                    train: pick(Some(src), Split::Train),
                    target: strip_labels(pick(Some(tgt), Split::Train)),
                    eval: pick(Some(tgt), cfg.eval_split),
                }
            }
        })
    }
}

pub fn train<T: Real>(cfg: &RunConfig, kind: TrainKind, corpora: &Corpora) -> Result<TrainOutcome<T>> {
    let model = cfg.model_config();
    let tc = cfg.train_config();
    let out = match kind {
        TrainKind::Sl => train_sl(&corpora.train, &model, &tc)?,
        TrainKind::Dl => train_dl(&corpora.train, &corpora.target, &model, &tc)?,
    };
    for w in &out.warnings {
        warn!("{w}");
    }
    Ok(out)
}

/// Mode used when none is requested: the single head, or the average of
/// both dual heads.
pub fn default_mode<T: Real>(params: &ModelParams<T>) -> ScoreMode {
    match params.roles().as_slice() {
        [HeadRole::Coarse] => ScoreMode::Coarse,
        [HeadRole::Fine] => ScoreMode::Fine,
        [HeadRole::Main] => ScoreMode::Sl,
        _ => ScoreMode::Averaged,
    }
}

/// Scores videos on up to `available_parallelism` threads; output order
/// follows `videos`.
pub fn score_all<T: Real>(
    params: &ModelParams<T>,
    videos: &[VideoFeatures],
    set_size: usize,
    mode: ScoreMode,
) -> Result<Vec<ScoreTrack>> {
    mode.heads(params)?;
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(videos.len().max(1));
    if workers <= 1 {
        return videos
            .iter()
            .map(|v| score_video(params, v, set_size, mode).map_err(VhdError::from))
            .collect();
    }
    let chunk = videos.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = videos
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|v| score_video(params, v, set_size, mode))
                        .collect::<vhd_core::Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(videos.len());
        for h in handles {
            out.extend(h.join().expect("scoring worker panicked")?);
        }
        Ok(out)
    })
}

/// `map` (and `top{k}_map`) per category, over videos that carry labels.
pub fn metrics(
    tracks: &[ScoreTrack],
    videos: &[VideoFeatures],
    threshold: f64,
    top_k: Option<usize>,
) -> Result<Vec<MetricRow>> {
    let mut categories: Vec<&str> = Vec::new();
    for v in videos {
        if !categories.contains(&v.category.as_str()) {
            categories.push(&v.category);
        }
    }
    let mut rows = Vec::new();
    for cat in categories {
        let mut ts = Vec::new();
        let mut ls: Vec<&[f64]> = Vec::new();
        for (t, v) in tracks.iter().zip(videos) {
            if v.category != cat {
                continue;
            }
            match v.labels() {
                Some(l) => {
                    ts.push(t.clone());
                    ls.push(l);
                }
                None => warn!("video {} has no annotations; not evaluated", v.video_id),
            }
        }
        if ts.is_empty() {
            warn!("category {cat} has no annotated videos; skipped");
            continue;
        }
        let report = mean_ap(&ts, &ls, threshold)?;
        for id in &report.skipped {
            warn!("video {id} has no positive segments; excluded from mAP");
        }
        rows.push(MetricRow {
            metric: "map".into(),
            category: cat.into(),
            value: report.value,
        });
        if let Some(k) = top_k {
            rows.push(MetricRow {
                metric: format!("top{k}_map"),
                category: cat.into(),
                value: top_k_map(&ts, &ls, k, threshold)?.value,
            });
        }
    }
    Ok(rows)
}

/// Unweighted mean AP over every annotated video in `videos`.
pub fn overall_map(tracks: &[ScoreTrack], videos: &[VideoFeatures], threshold: f64) -> Result<f64> {
    let (ts, ls): (Vec<ScoreTrack>, Vec<&[f64]>) = tracks
        .iter()
        .zip(videos)
        .filter_map(|(t, v)| v.labels().map(|l| (t.clone(), l)))
        .unzip();
    Ok(mean_ap(&ts, &ls, threshold)?.value)
}

/// Trains per `cfg` and returns the mean AP on `corpora.eval`.
pub fn train_and_eval<T: Real>(cfg: &RunConfig, kind: TrainKind, corpora: &Corpora) -> Result<f64> {
    let out = train::<T>(cfg, kind, corpora)?;
    let mode = cfg.score_mode.unwrap_or_else(|| default_mode(&out.params));
    let tracks = score_all(&out.params, &corpora.eval, cfg.set_size, mode)?;
    overall_map(&tracks, &corpora.eval, cfg.binarize_threshold)
}

/// `cfg` with the sweep axis set to `value`.
pub fn sweep_point(cfg: &RunConfig, value: f64) -> Result<RunConfig> {
    let mut c = cfg.clone();
    match cfg.sweep_axis {
        SweepAxis::SetSize => {
            if !(value >= 1.0) || value.fract() != 0.0 {
                return Err(VhdError::Config(format!(
                    "set_size sweep value {value} is not a positive integer"
                )));
            }
            c.set_size = value as usize;
        }
        SweepAxis::Lambda => c.lambda = value,
    }
    Ok(c)
}

/// One train-and-evaluate run per sweep value, as `(value, map)` rows.
pub fn sweep<T: Real>(cfg: &RunConfig, corpora: &Corpora) -> Result<Vec<(f64, f64)>> {
    let points = cfg
        .sweep_values
        .iter()
        .map(|&v| sweep_point(cfg, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?;
    points
        .iter()
        .map(|(v, c)| Ok((*v, train_and_eval::<T>(c, cfg.sweep_mode, corpora)?)))
        .collect()
}
