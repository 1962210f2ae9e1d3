//! Training loops: supervised set training of a single-head model and
//! dual-learner transfer training with a shared encoder.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::data::{build_mixed_set, sample_target_set, sample_training_set, VideoSource};
use crate::error::{Error, Result};
use crate::loss::{coarse_loss, distill_loss, fine_loss, set_pred_loss, weighted_total};
use crate::model::{HeadRole, ModelConfig, ModelParams};
use crate::optim::{OptimizerState, SgdConfig, StepSchedule};
use crate::rng::{component_rng, component_seed, SeededRng, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Heads score raw features; no encoder parameters exist.
    pub no_transformer: bool,
    /// Dual mode: train only the coarse head on mixed sets.
    pub coarse_only: bool,
    /// Dual mode: train only the fine head on source sets.
    pub fine_only: bool,
    /// Dual mode: keep the distillation term but weight it by zero.
    pub no_distill: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub schedule: StepSchedule,
    pub set_size: usize,
    pub lambda: f64,
    /// Defaults to the number of (source) training videos.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    pub sgd: SgdConfig,
    /// Treat the averaged distillation target as a constant.
    pub detach_teacher: bool,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            schedule: StepSchedule::default(),
            set_size: 20,
            lambda: 1.0,
            steps_per_epoch: None,
            seed: 0,
            sgd: SgdConfig::default(),
            detach_teacher: true,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate_sl(&self) -> Result<()> {
        self.validate_common()?;
        let a = &self.ablation;
        if a.coarse_only || a.fine_only || a.no_distill {
            return Err(Error::Config(
                "coarse_only, fine_only and no_distill apply to dual training only".into(),
            ));
        }
        Ok(())
    }

    pub fn validate_dl(&self) -> Result<()> {
        self.validate_common()?;
        if !self.set_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "set_size must be even for dual training, got {}",
                self.set_size
            )));
        }
        if self.ablation.coarse_only && self.ablation.fine_only {
            return Err(Error::Config("coarse_only and fine_only are exclusive".into()));
        }
        Ok(())
    }

    fn validate_common(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.set_size < 2 {
            return Err(Error::Config("set_size must be at least 2".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be finite and non-negative".into()));
        }
        if !(self.schedule.base_lr > 0.0) || !(self.schedule.decay_factor > 0.0) {
            return Err(Error::Config(
                "learning rate and decay factor must be positive".into(),
            ));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps_per_epoch must be positive".into()));
        }
        Ok(())
    }

    /// λ actually applied to the distillation term.
    pub fn effective_lambda(&self) -> f64 {
        if self.ablation.no_distill {
            0.0
        } else {
            self.lambda
        }
    }

    /// Heads of the model trained in dual mode.
    pub fn dual_roles(&self) -> Vec<HeadRole> {
        if self.ablation.coarse_only {
            alloc::vec![HeadRole::Coarse]
        } else if self.ablation.fine_only {
            alloc::vec![HeadRole::Fine]
        } else {
            alloc::vec![HeadRole::Coarse, HeadRole::Fine]
        }
    }

    /// Model config with the ablation's encoder switch applied.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        if self.ablation.no_transformer {
            cfg.use_encoder = false;
        }
        cfg
    }
}

/// Learning rate for `epoch`, which must lie in `0..cfg.epochs`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::domain(
            "lr_at_epoch",
            format!("epoch {epoch} outside 0..{}", cfg.epochs),
        ));
    }
    Ok(cfg.schedule.lr(epoch))
}

/// One line of the loss log. Single-head training reports its loss in the
/// `fine` column; absent terms are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub coarse: f64,
    pub fine: f64,
    pub distill: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub log: Vec<LossRecord>,
    pub warnings: Vec<String>,
}

/// Mean `total` per epoch, in epoch order.
pub fn epoch_means(log: &[LossRecord]) -> Vec<f64> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for r in log {
        if out.len() <= r.epoch {
            out.resize(r.epoch + 1, (0.0, 0));
        }
        out[r.epoch].0 += r.total;
        out[r.epoch].1 += 1;
    }
    out.into_iter()
        .map(|(s, n)| if n == 0 { f64::NAN } else { s / n as f64 })
        .collect()
}

struct Runner<T> {
    params: ModelParams<T>,
    state: OptimizerState<T>,
    sampling: SeededRng,
    dropout: SeededRng,
    use_dropout: bool,
}

impl<T: Real> Runner<T> {
    fn new(model_cfg: &ModelConfig, roles: &[HeadRole], cfg: &TrainConfig) -> Result<Self> {
        let params = ModelParams::init(model_cfg, roles, component_seed(cfg.seed, Stream::Init))?;
        let state = OptimizerState::new(cfg.sgd.clone(), params.tensors());
        Ok(Runner {
            state,
            sampling: component_rng(cfg.seed, Stream::Sampling),
            dropout: component_rng(cfg.seed, Stream::Dropout),
            use_dropout: model_cfg.use_encoder && model_cfg.encoder.dropout > 0.0,
            params,
        })
    }
}

fn dropout_of(rng: &mut SeededRng, enabled: bool) -> Option<&mut dyn RngCore> {
    if enabled {
        Some(rng)
    } else {
        None
    }
}

fn apply_step<T: Real>(
    params: &mut ModelParams<T>,
    state: &mut OptimizerState<T>,
    tape: &Tape<T>,
    vars: &[Var],
    total: Var,
    lr: f64,
    at: (usize, usize),
) -> Result<()> {
    let loss = tape.value(total).item().as_f64();
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: format!("loss at epoch {} step {}", at.0, at.1),
        });
    }
    let grads = tape.backward(total)?;
    let g: Vec<Tensor<T>> = vars.iter().map(|&v| grads.wrt(v)).collect();
    state.step(params.tensors_mut(), &g, lr).map_err(|e| match e {
        Error::NonFinite { what } => Error::NonFinite {
            what: format!("{what} at epoch {} step {}", at.0, at.1),
        },
        other => other,
    })
}

fn item<T: Real>(tape: &Tape<T>, v: Option<Var>) -> f64 {
    v.map_or(0.0, |v| tape.value(v).item().as_f64())
}

fn require_videos<S: VideoSource + ?Sized>(op: &'static str, what: &str, corpus: &S) -> Result<()> {
    if corpus.num_videos() == 0 {
        return Err(Error::domain(op, format!("{what} corpus is empty")));
    }
    Ok(())
}

/// Supervised set training of a single-head model on a labeled corpus.
pub fn train_sl<T: Real, S: VideoSource + ?Sized>(
    corpus: &S,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate_sl()?;
    require_videos("train_sl", "training", corpus)?;
    let model_cfg = cfg.model_config(model_cfg);
    let mut run = Runner::<T>::new(&model_cfg, &[HeadRole::Main], cfg)?;
    let steps = cfg.steps_per_epoch.unwrap_or(corpus.num_videos());
    let mut log = Vec::with_capacity(cfg.epochs * steps);
    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch)?;
        for step in 0..steps {
            let vi = run.sampling.random_range(0..corpus.num_videos());
            let set = sample_training_set(corpus.video(vi), cfg.set_size, &mut run.sampling)?;
            let labels: Vec<T> = set.labels().expect("training sets are labeled");

            let mut tape = Tape::new();
            let bound = run.params.bind(&mut tape);
            let z = tape.constant(set.features());
            let enc = bound.encode_set(&mut tape, z, dropout_of(&mut run.dropout, run.use_dropout))?;
            let scores = bound.score_segments(&mut tape, HeadRole::Main, enc)?;
            let loss = set_pred_loss(&mut tape, &labels, scores)?;
            let value = item(&tape, Some(loss));
            let vars = bound.into_vars();
            apply_step(
                &mut run.params,
                &mut run.state,
                &tape,
                &vars,
                loss,
                lr,
                (epoch, step),
            )?;
            log.push(LossRecord {
                epoch,
                step,
                coarse: 0.0,
                fine: value,
                distill: 0.0,
                total: value,
                lr,
            });
        }
    }
    Ok(TrainOutcome {
        params: run.params,
        log,
        warnings: Vec::new(),
    })
}

/// Dual-learner transfer training: a coarse head separates target from
/// source segments on mixed sets, a fine head learns highlight labels on
/// source sets, and both are distilled toward their mean on target sets.
/// All passes of a step share one tape and one encoder.
pub fn train_dl<T: Real, S: VideoSource + ?Sized, U: VideoSource + ?Sized>(
    source: &S,
    target: &U,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate_dl()?;
    require_videos("train_dl", "source", source)?;
    let uses_target = !cfg.ablation.fine_only;
    let mut warnings = Vec::new();
    if uses_target {
        require_videos("train_dl", "target", target)?;
        let labeled = (0..target.num_videos())
            .filter(|&i| target.video(i).labels().is_some())
            .count();
        if labeled > 0 {
            warnings.push(format!(
                "{labeled} target videos carry labels; they are ignored during training"
            ));
        }
    }
    for i in 0..source.num_videos() {
        if source.video(i).labels().is_none() {
            return Err(Error::domain(
                "train_dl",
                format!("source video {} has no labels", source.video(i).video_id),
            ));
        }
    }
    let model_cfg = cfg.model_config(model_cfg);
    let roles = cfg.dual_roles();
    let with_coarse = roles.contains(&HeadRole::Coarse);
    let with_fine = roles.contains(&HeadRole::Fine);
    let with_distill = with_coarse && with_fine;
    let lambda = cfg.effective_lambda();

    let mut run = Runner::<T>::new(&model_cfg, &roles, cfg)?;
    let steps = cfg.steps_per_epoch.unwrap_or(source.num_videos());
    let mut log = Vec::with_capacity(cfg.epochs * steps);
    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch)?;
        for step in 0..steps {
            let si = run.sampling.random_range(0..source.num_videos());
            let x_s = sample_training_set(source.video(si), cfg.set_size, &mut run.sampling)?;
            let (x_t, x_m) = if uses_target {
                let ti = run.sampling.random_range(0..target.num_videos());
                let x_t = sample_target_set(target.video(ti), cfg.set_size, &mut run.sampling)?;
                let x_m = build_mixed_set(&x_s, &x_t, &mut run.sampling)?;
                (Some(x_t), Some(x_m))
            } else {
                (None, None)
            };

            let mut tape = Tape::new();
            let bound = run.params.bind(&mut tape);

            let mut coarse = None;
            if let (true, Some(x_m)) = (with_coarse, &x_m) {
                let z = tape.constant(x_m.features());
                let enc = bound.encode_set(&mut tape, z, dropout_of(&mut run.dropout, run.use_dropout))?;
                let s = bound.score_segments(&mut tape, HeadRole::Coarse, enc)?;
                let labels: Vec<T> = x_m.labels().expect("mixed sets are labeled");
                coarse = Some(coarse_loss(&mut tape, &labels, s)?);
            }
            let mut fine = None;
            if with_fine {
                let z = tape.constant(x_s.features());
                let enc = bound.encode_set(&mut tape, z, dropout_of(&mut run.dropout, run.use_dropout))?;
                let s = bound.score_segments(&mut tape, HeadRole::Fine, enc)?;
                let labels: Vec<T> = x_s.labels().expect("source sets are labeled");
                fine = Some(fine_loss(&mut tape, &labels, s)?);
            }
            let mut distill = None;
            if let (true, Some(x_t)) = (with_distill, &x_t) {
                let z = tape.constant(x_t.features());
                let enc = bound.encode_set(&mut tape, z, dropout_of(&mut run.dropout, run.use_dropout))?;
                let sc = bound.score_segments(&mut tape, HeadRole::Coarse, enc)?;
                let sf = bound.score_segments(&mut tape, HeadRole::Fine, enc)?;
                distill = Some(distill_loss(&mut tape, sc, sf, cfg.detach_teacher)?);
            }
            let total = weighted_total(&mut tape, coarse, fine, distill, lambda)?;
            let record = LossRecord {
                epoch,
                step,
                coarse: item(&tape, coarse),
                fine: item(&tape, fine),
                distill: item(&tape, distill),
                total: item(&tape, Some(total)),
                lr,
            };
            let vars = bound.into_vars();
            apply_step(
                &mut run.params,
                &mut run.state,
                &tape,
                &vars,
                total,
                lr,
                (epoch, step),
            )?;
            log.push(record);
        }
    }
    Ok(TrainOutcome {
        params: run.params,
        log,
        warnings,
    })
}
