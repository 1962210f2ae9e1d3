//! Set-level objectives.
//!
//! Every prediction loss compares two softmax distributions over a set with
//! `KL(target ‖ prediction)`: the target comes first. Labels enter the
//! softmax as raw values, without temperature or rescaling.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

fn check_set_len(op: &'static str, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::domain(
            op,
            format!("set needs at least 2 members, got {n}"),
        ));
    }
    Ok(())
}

fn check_labels<T: Real>(op: &'static str, labels: &[T], scores: &[usize]) -> Result<()> {
    if scores != [labels.len()] {
        return Err(Error::dim(op, &[labels.len()], scores));
    }
    check_set_len(op, labels.len())?;
    if labels.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(op, "labels must be finite"));
    }
    Ok(())
}

fn kl_to_softmax<T: Real>(tape: &mut Tape<T>, target: Var, scores: Var) -> Result<Var> {
    let p = tape.softmax(target)?;
    let q = tape.softmax(scores)?;
    tape.kl_div(p, q)
}

/// `KL(σ(labels) ‖ σ(scores))`. Labels are constants; gradient reaches
/// `scores` only.
pub fn set_pred_loss<T: Real>(tape: &mut Tape<T>, labels: &[T], scores: Var) -> Result<Var> {
    check_labels("set_pred_loss", labels, tape.shape(scores))?;
    let y = tape.constant(Tensor::vector(labels.to_vec()));
    kl_to_softmax(tape, y, scores)
}

/// Supervised loss of the fine-grained learner on a labeled source set.
pub fn fine_loss<T: Real>(tape: &mut Tape<T>, source_labels: &[T], scores: Var) -> Result<Var> {
    set_pred_loss(tape, source_labels, scores)
}

/// Loss of the coarse-grained learner on a mixed set whose labels mark
/// target-category members with 1 and source members with 0.
pub fn coarse_loss<T: Real>(tape: &mut Tape<T>, mixed_labels: &[T], scores: Var) -> Result<Var> {
    check_labels("coarse_loss", mixed_labels, tape.shape(scores))?;
    if mixed_labels.iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::domain("coarse_loss", "mixed-set labels must be 0 or 1"));
    }
    let y = tape.constant(Tensor::vector(mixed_labels.to_vec()));
    kl_to_softmax(tape, y, scores)
}

/// Mutual distillation between the two learners on a target set.
///
/// Both score vectors are pulled toward the softmax of their elementwise
/// mean: `½·[KL(σ(avg) ‖ σ(coarse)) + KL(σ(avg) ‖ σ(fine))]`. With
/// `detach_teacher` the averaged distribution is a constant.
pub fn distill_loss<T: Real>(
    tape: &mut Tape<T>,
    coarse_on_target: Var,
    fine_on_target: Var,
    detach_teacher: bool,
) -> Result<Var> {
    let (sc, sf) = (tape.shape(coarse_on_target), tape.shape(fine_on_target));
    if sc != sf || sc.len() != 1 {
        return Err(Error::dim("distill_loss", sc, sf));
    }
    check_set_len("distill_loss", sc[0])?;
    let sum = tape.add(coarse_on_target, fine_on_target)?;
    let mut avg = tape.scale(sum, T::of(0.5));
    if detach_teacher {
        avg = tape.detach(avg);
    }
    let teacher = tape.softmax(avg)?;
    let qc = tape.softmax(coarse_on_target)?;
    let qf = tape.softmax(fine_on_target)?;
    let kc = tape.kl_div(teacher, qc)?;
    let kf = tape.kl_div(teacher, qf)?;
    let both = tape.add(kc, kf)?;
    Ok(tape.scale(both, T::of(0.5)))
}

/// Loss components of one dual-learner step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBundle {
    pub coarse: f64,
    pub fine: f64,
    pub distill: f64,
    pub total: f64,
    pub lambda: f64,
}

/// `total = coarse + fine + λ·distill`.
pub fn total_objective(coarse: f64, fine: f64, distill: f64, lambda: f64) -> Result<LossBundle> {
    if !(lambda >= 0.0) {
        return Err(Error::domain("total_objective", "lambda must be non-negative"));
    }
    Ok(LossBundle {
        coarse,
        fine,
        distill,
        total: coarse + fine + lambda * distill,
        lambda,
    })
}

/// Tape form of [`total_objective`]; absent terms count as zero.
pub fn weighted_total<T: Real>(
    tape: &mut Tape<T>,
    coarse: Option<Var>,
    fine: Option<Var>,
    distill: Option<Var>,
    lambda: f64,
) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::domain("total_objective", "lambda must be non-negative"));
    }
    let mut terms: Vec<Var> = Vec::new();
    terms.extend(coarse);
    terms.extend(fine);
    if let Some(d) = distill {
        terms.push(tape.scale(d, T::of(lambda)));
    }
    let mut acc = match terms.first() {
        Some(&v) => v,
        None => return Err(Error::domain("total_objective", "no loss terms")),
    };
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

/// Hinge loss `max(0, margin − pos + neg)` of the pairwise baseline.
pub fn pair_ranking_loss(pos_score: f64, neg_score: f64, margin: f64) -> f64 {
    (margin - pos_score + neg_score).max(0.0)
}

/// Tape form of [`pair_ranking_loss`] over single-element scores.
pub fn pair_ranking_loss_var<T: Real>(
    tape: &mut Tape<T>,
    pos_score: Var,
    neg_score: Var,
    margin: f64,
) -> Result<Var> {
    if !(margin >= 0.0) {
        return Err(Error::domain("pair_ranking_loss", "margin must be non-negative"));
    }
    let diff = tape.sub(neg_score, pos_score)?;
    let m = tape.constant(Tensor::full(tape.shape(diff), T::of(margin)));
    let shifted = tape.add(diff, m)?;
    let h = tape.relu(shifted);
    Ok(tape.sum(h))
}

/// Value of [`set_pred_loss`] on plain slices.
pub fn set_pred_loss_value(labels: &[f64], scores: &[f64]) -> Result<f64> {
    let mut tape = Tape::<f64>::new();
    let s = tape.constant(Tensor::vector(scores.to_vec()));
    let l = set_pred_loss(&mut tape, labels, s)?;
    Ok(tape.value(l).item())
}

/// Value of [`distill_loss`] on plain slices.
pub fn distill_loss_value(coarse: &[f64], fine: &[f64]) -> Result<f64> {
    let mut tape = Tape::<f64>::new();
    let c = tape.constant(Tensor::vector(coarse.to_vec()));
    let f = tape.constant(Tensor::vector(fine.to_vec()));
    let l = distill_loss(&mut tape, c, f, true)?;
    Ok(tape.value(l).item())
}
