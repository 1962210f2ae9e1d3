//! Flat `key = value` run configuration. Every key has a default; unknown
//! keys are rejected. [`RunConfig::to_text`] writes every key with its
//! resolved value and parses back to the same config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vhd_core::eval::ScoreMode;
use vhd_core::model::{EncoderConfig, ModelConfig};
use vhd_core::optim::{SgdConfig, StepSchedule};
use vhd_core::synth::{Split, SynthParams};
use vhd_core::train::{Ablation, TrainConfig};

use crate::error::{Result, VhdError};
use crate::formats::manifest::parse_split;
use crate::formats::read_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    SetSize,
    Lambda,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainKind {
    Sl,
    Dl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub precision: Precision,

    pub synth: SynthParams,

    /// `None`: equal to the feature dim.
    pub model_dim: Option<usize>,
    pub num_layers: usize,
    pub num_heads: usize,
    /// `None`: four times the model dim.
    pub ffn_dim: Option<usize>,
    pub use_final_norm: bool,
    pub ln_eps: f64,
    pub dropout: f64,
    pub head_hidden: [usize; 2],

    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub set_size: usize,
    pub lambda: f64,
    pub steps_per_epoch: Option<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    pub detach_teacher: bool,
    pub ablation: Ablation,

    pub manifest: Option<PathBuf>,
    pub source_category: Option<String>,
    pub target_category: Option<String>,
    pub eval_split: Split,
    pub checkpoint: Option<PathBuf>,
    /// `None`: chosen from the checkpoint's heads.
    pub score_mode: Option<ScoreMode>,
    pub binarize_threshold: f64,
    pub top_k: Option<usize>,

    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub sweep_mode: TrainKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            precision: Precision::F32,
            synth: SynthParams::default(),
            model_dim: None,
            num_layers: enc.num_layers,
            num_heads: enc.num_heads,
            ffn_dim: None,
            use_final_norm: enc.use_final_norm,
            ln_eps: enc.ln_eps,
            dropout: enc.dropout,
            head_hidden: ModelConfig::default().head_hidden,
            epochs: train.epochs,
            base_lr: train.schedule.base_lr,
            lr_decay_every: train.schedule.decay_every,
            lr_decay_factor: train.schedule.decay_factor,
            set_size: train.set_size,
            lambda: train.lambda,
            steps_per_epoch: None,
            momentum: train.sgd.momentum,
            weight_decay: train.sgd.weight_decay,
            clip_norm: None,
            detach_teacher: train.detach_teacher,
            ablation: Ablation::default(),
            manifest: None,
            source_category: None,
            target_category: None,
            eval_split: Split::Test,
            checkpoint: None,
            score_mode: None,
            binarize_threshold: 0.5,
            top_k: None,
            sweep_axis: SweepAxis::SetSize,
            sweep_values: vec![4.0, 8.0, 16.0, 20.0, 24.0],
            sweep_mode: TrainKind::Dl,
        }
    }
}

/// Every accepted key with a one-line description, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    (
        "seed",
        "root seed; split into data, init, sampling and dropout streams",
    ),
    ("out_dir", "output directory"),
    ("precision", "f32 | f64 arithmetic for training and scoring"),
    ("dim", "feature dimension"),
    ("categories", "comma-separated synthetic category names"),
    ("prototype_scale", "length of each category's prototype offset"),
    ("alpha", "weight of the shared highlight direction"),
    ("beta", "weight of the category-private highlight direction"),
    ("rho", "scale of the per-video random offset"),
    ("noise", "scale of the per-segment noise"),
    ("videos_per_category", "synthetic videos per category"),
    ("segments_per_video", "segments per synthetic video"),
    (
        "test_fraction",
        "fraction of each category's videos in the test split",
    ),
    ("continuous_labels", "write latent strength instead of 0/1 labels"),
    ("model_dim", "encoder width, or auto (= dim)"),
    ("num_layers", "encoder blocks"),
    ("num_heads", "attention heads per block"),
    ("ffn_dim", "feed-forward hidden width, or auto (= 4 * model_dim)"),
    ("use_final_norm", "layer norm after the last block"),
    ("ln_eps", "layer norm epsilon"),
    ("dropout", "encoder dropout rate during training"),
    ("head_hidden1", "first hidden width of each scoring head"),
    ("head_hidden2", "second hidden width of each scoring head"),
    ("epochs", "training epochs"),
    ("base_lr", "initial learning rate"),
    ("lr_decay_every", "epochs between learning-rate decays"),
    ("lr_decay_factor", "multiplier applied at each decay"),
    ("set_size", "segments per training set and inference window"),
    ("lambda", "weight of the distillation loss"),
    (
        "steps_per_epoch",
        "optimizer steps per epoch, or auto (= training videos)",
    ),
    ("momentum", "SGD momentum"),
    ("weight_decay", "L2 weight decay added to gradients"),
    ("clip_norm", "global gradient-norm clip, or none"),
    ("detach_teacher", "treat the distillation target as a constant"),
    (
        "ablation",
        "none, or comma list of no_transformer, coarse_only, fine_only, no_distill",
    ),
    ("manifest", "corpus manifest path, or none"),
    (
        "source_category",
        "labeled category, or none (= all categories for sl)",
    ),
    ("target_category", "unlabeled transfer category, or none"),
    ("eval_split", "train | test split scored by score, eval and sweep"),
    ("checkpoint", "checkpoint path for score and eval, or none"),
    ("score_mode", "auto | sl | coarse | fine | averaged"),
    ("binarize_threshold", "labels above this count as highlights"),
    ("top_k", "also report top-k mAP, or none"),
    ("sweep_axis", "set_size | lambda"),
    ("sweep_values", "comma-separated values for the sweep axis"),
    ("sweep_mode", "sl | dl training in sweeps"),
];

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| VhdError::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(VhdError::Config(format!(
            "{key}: expected true or false, got {v:?}"
        ))),
    }
}

fn parse_opt<T: FromStr>(key: &str, v: &str, none: &str) -> Result<Option<T>> {
    if v == none {
        Ok(None)
    } else {
        parse_value(key, v).map(Some)
    }
}

fn show_opt<T: ToString>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or(none.to_string(), T::to_string)
}

fn non_empty(v: &str) -> Option<String> {
    (v != "none" && !v.is_empty()).then(|| v.to_string())
}

pub fn parse_ablation(v: &str) -> Result<Ablation> {
    let mut a = Ablation::default();
    if v == "none" {
        return Ok(a);
    }
    for part in v.split(',').map(str::trim) {
        match part.replace('-', "_").as_str() {
            "no_transformer" => a.no_transformer = true,
            "coarse_only" => a.coarse_only = true,
            "fine_only" => a.fine_only = true,
            "no_distill" => a.no_distill = true,
            _ => return Err(VhdError::Config(format!("ablation: unknown flag {part:?}"))),
        }
    }
    Ok(a)
}

pub fn ablation_name(a: &Ablation) -> String {
    let flags: Vec<&str> = [
        (a.no_transformer, "no_transformer"),
        (a.coarse_only, "coarse_only"),
        (a.fine_only, "fine_only"),
        (a.no_distill, "no_distill"),
    ]
    .iter()
    .filter(|(on, _)| *on)
    .map(|(_, n)| *n)
    .collect();
    if flags.is_empty() {
        "none".into()
    } else {
        flags.join(",")
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.synth;
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "precision" => {
                self.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => {
                        return Err(VhdError::Config(format!(
                            "precision: expected f32 or f64, got {v:?}"
                        )))
                    }
                }
            }
            "dim" => s.dim = parse_value(key, v)?,
            "categories" => {
                s.categories = v.split(',').map(|c| c.trim().to_string()).collect();
                if s.categories.iter().any(String::is_empty) {
                    return Err(VhdError::Config("categories: empty name".into()));
                }
            }
            "prototype_scale" => s.prototype_scale = parse_value(key, v)?,
            "alpha" => s.alpha = parse_value(key, v)?,
            "beta" => s.beta = parse_value(key, v)?,
            "rho" => s.rho = parse_value(key, v)?,
            "noise" => s.noise = parse_value(key, v)?,
            "videos_per_category" => s.videos_per_category = parse_value(key, v)?,
            "segments_per_video" => s.segments_per_video = parse_value(key, v)?,
            "test_fraction" => s.test_fraction = parse_value(key, v)?,
            "continuous_labels" => s.continuous_labels = parse_bool(key, v)?,
            "model_dim" => self.model_dim = parse_opt(key, v, "auto")?,
            "num_layers" => self.num_layers = parse_value(key, v)?,
            "num_heads" => self.num_heads = parse_value(key, v)?,
            "ffn_dim" => self.ffn_dim = parse_opt(key, v, "auto")?,
            "use_final_norm" => self.use_final_norm = parse_bool(key, v)?,
            "ln_eps" => self.ln_eps = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "head_hidden1" => self.head_hidden[0] = parse_value(key, v)?,
            "head_hidden2" => self.head_hidden[1] = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "base_lr" => self.base_lr = parse_value(key, v)?,
            "lr_decay_every" => self.lr_decay_every = parse_value(key, v)?,
            "lr_decay_factor" => self.lr_decay_factor = parse_value(key, v)?,
            "set_size" => self.set_size = parse_value(key, v)?,
            "lambda" => self.lambda = parse_value(key, v)?,
            "steps_per_epoch" => self.steps_per_epoch = parse_opt(key, v, "auto")?,
            "momentum" => self.momentum = parse_value(key, v)?,
            "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "clip_norm" => self.clip_norm = parse_opt(key, v, "none")?,
            "detach_teacher" => self.detach_teacher = parse_bool(key, v)?,
            "ablation" => self.ablation = parse_ablation(v)?,
            "manifest" => self.manifest = non_empty(v).map(PathBuf::from),
            "source_category" => self.source_category = non_empty(v),
            "target_category" => self.target_category = non_empty(v),
            "eval_split" => {
                self.eval_split = parse_split(v).ok_or_else(|| {
                    VhdError::Config(format!("eval_split: expected train or test, got {v:?}"))
                })?
            }
            "checkpoint" => self.checkpoint = non_empty(v).map(PathBuf::from),
            "score_mode" => {
                self.score_mode = match v {
                    "auto" => None,
                    _ => Some(
                        ScoreMode::parse(v)
                            .ok_or_else(|| VhdError::Config(format!("score_mode: unknown mode {v:?}")))?,
                    ),
                }
            }
            "binarize_threshold" => self.binarize_threshold = parse_value(key, v)?,
            "top_k" => self.top_k = parse_opt(key, v, "none")?,
            "sweep_axis" => {
                self.sweep_axis = match v {
                    "set_size" | "N" | "n" => SweepAxis::SetSize,
                    "lambda" => SweepAxis::Lambda,
                    _ => return Err(VhdError::Config(format!("sweep_axis: unknown axis {v:?}"))),
                }
            }
            "sweep_values" => {
                self.sweep_values = v
                    .split(',')
                    .map(|x| parse_value(key, x.trim()))
                    .collect::<Result<_>>()?
            }
            "sweep_mode" => {
                self.sweep_mode = match v {
                    "sl" => TrainKind::Sl,
                    "dl" => TrainKind::Dl,
                    _ => {
                        return Err(VhdError::Config(format!(
                            "sweep_mode: expected sl or dl, got {v:?}"
                        )))
                    }
                }
            }
            _ => return Err(VhdError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Resolved value of `key` as it would be written to a config file.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.synth;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".into(), |p| p.display().to_string());
        Some(match key {
            "seed" => self.seed.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "precision" => match self.precision {
                Precision::F32 => "f32".into(),
                Precision::F64 => "f64".into(),
            },
            "dim" => s.dim.to_string(),
            "categories" => s.categories.join(","),
            "prototype_scale" => s.prototype_scale.to_string(),
            "alpha" => s.alpha.to_string(),
            "beta" => s.beta.to_string(),
            "rho" => s.rho.to_string(),
            "noise" => s.noise.to_string(),
            "videos_per_category" => s.videos_per_category.to_string(),
            "segments_per_video" => s.segments_per_video.to_string(),
            "test_fraction" => s.test_fraction.to_string(),
            "continuous_labels" => s.continuous_labels.to_string(),
            "model_dim" => show_opt(&self.model_dim, "auto"),
            "num_layers" => self.num_layers.to_string(),
            "num_heads" => self.num_heads.to_string(),
            "ffn_dim" => show_opt(&self.ffn_dim, "auto"),
            "use_final_norm" => self.use_final_norm.to_string(),
            "ln_eps" => self.ln_eps.to_string(),
            "dropout" => self.dropout.to_string(),
            "head_hidden1" => self.head_hidden[0].to_string(),
            "head_hidden2" => self.head_hidden[1].to_string(),
            "epochs" => self.epochs.to_string(),
            "base_lr" => self.base_lr.to_string(),
            "lr_decay_every" => self.lr_decay_every.to_string(),
            "lr_decay_factor" => self.lr_decay_factor.to_string(),
            "set_size" => self.set_size.to_string(),
            "lambda" => self.lambda.to_string(),
            "steps_per_epoch" => show_opt(&self.steps_per_epoch, "auto"),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "clip_norm" => show_opt(&self.clip_norm, "none"),
            "detach_teacher" => self.detach_teacher.to_string(),
            "ablation" => ablation_name(&self.ablation),
            "manifest" => path(&self.manifest),
            "source_category" => show_opt(&self.source_category, "none"),
            "target_category" => show_opt(&self.target_category, "none"),
            "eval_split" => self.eval_split.name().into(),
            "checkpoint" => path(&self.checkpoint),
            "score_mode" => self.score_mode.map_or("auto", ScoreMode::name).into(),
            "binarize_threshold" => self.binarize_threshold.to_string(),
            "top_k" => show_opt(&self.top_k, "none"),
            "sweep_axis" => match self.sweep_axis {
                SweepAxis::SetSize => "set_size".into(),
                SweepAxis::Lambda => "lambda".into(),
            },
            "sweep_values" => join(&self.sweep_values),
            "sweep_mode" => match self.sweep_mode {
                TrainKind::Sl => "sl".into(),
                TrainKind::Dl => "dl".into(),
            },
            _ => return None,
        })
    }

    /// Parses config text on top of the defaults. Blank lines and lines
    /// starting with `#` are ignored; a repeated key is an error.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut seen = BTreeMap::new();
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| VhdError::parse(origin, i + 1, "expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.insert(k.to_string(), i + 1).is_some() {
                return Err(VhdError::parse(origin, i + 1, format!("duplicate key {k:?}")));
            }
            cfg.set(k, v).map_err(|e| match e {
                VhdError::Config(msg) => VhdError::parse(origin, i + 1, msg),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::parse(&read_text(path)?, path)
    }

    /// Every key with its resolved value, preceded by its description.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, doc) in KEYS {
            out.push_str(&format!("# {doc}\n{k} = {}\n", self.get(k).expect("listed key")));
        }
        out
    }

    pub fn model_config(&self) -> ModelConfig {
        let d = self.model_dim.unwrap_or(self.synth.dim);
        ModelConfig {
            input_dim: self.synth.dim,
            encoder: EncoderConfig {
                num_layers: self.num_layers,
                num_heads: self.num_heads,
                model_dim: d,
                ffn_dim: self.ffn_dim.unwrap_or(4 * d),
                use_final_norm: self.use_final_norm,
                ln_eps: self.ln_eps,
                dropout: self.dropout,
            },
            use_encoder: true,
            head_hidden: self.head_hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            schedule: StepSchedule {
                base_lr: self.base_lr,
                decay_every: self.lr_decay_every,
                decay_factor: self.lr_decay_factor,
            },
            set_size: self.set_size,
            lambda: self.lambda,
            steps_per_epoch: self.steps_per_epoch,
            seed: self.seed,
            sgd: SgdConfig {
                momentum: self.momentum,
                weight_decay: self.weight_decay,
                clip_norm: self.clip_norm,
            },
            detach_teacher: self.detach_teacher,
            ablation: self.ablation,
        }
    }
}
