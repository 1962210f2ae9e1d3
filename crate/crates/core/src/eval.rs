//! Whole-video inference and ranking metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::VideoFeatures;
use crate::error::{Error, Result};
use crate::model::{HeadRole, ModelParams};
use crate::tape::Tape;
use crate::tensor::Real;

/// Context set built around one evaluated segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InferenceWindow {
    /// Segment indices in temporal order; may repeat at the edges.
    pub members: Vec<usize>,
    /// Position of the evaluated segment inside `members`.
    pub center_pos: usize,
}

/// Window of `n` segments around `s` in a video of `num_segments`.
///
/// Aims for `⌊(n−1)/2⌋` predecessors and the rest as successors. A side that
/// runs into the video boundary hands its shortfall to the other side; only
/// when the whole video is shorter than `n` are edge segments repeated, at
/// the edge of the side that received the shortfall.
pub fn build_window(num_segments: usize, s: usize, n: usize) -> Result<InferenceWindow> {
    if n == 0 {
        return Err(Error::domain("build_window", "set size must be positive"));
    }
    if s >= num_segments {
        return Err(Error::domain(
            "build_window",
            format!("segment {s} outside video of {num_segments} segments"),
        ));
    }
    let want_before = (n - 1) / 2;
    let want_after = n - 1 - want_before;
    let avail_before = s;
    let avail_after = num_segments - 1 - s;

    let short_before = want_before.saturating_sub(avail_before);
    let short_after = want_after.saturating_sub(avail_after);
    let spare_before = avail_before.saturating_sub(want_before);
    let spare_after = avail_after.saturating_sub(want_after);
    let moved_after = short_before.min(spare_after);
    let moved_before = short_after.min(spare_before);

    let before = want_before.min(avail_before) + moved_before;
    let after = want_after.min(avail_after) + moved_after;
    // Unfilled shortfall of one side is duplicated at the opposite edge.
    let dup_after = short_before - moved_after;
    let dup_before = short_after - moved_before;

    let mut members = Vec::with_capacity(n);
    members.extend(core::iter::repeat_n(s - before, dup_before));
    members.extend(s - before..=s + after);
    members.extend(core::iter::repeat_n(s + after, dup_after));
    debug_assert_eq!(members.len(), n);
    Ok(InferenceWindow {
        members,
        center_pos: dup_before + before,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    /// The model's only head.
    Sl,
    Coarse,
    Fine,
    /// Mean of the coarse and fine scores.
    Averaged,
}

impl ScoreMode {
    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Sl => "sl",
            ScoreMode::Coarse => "coarse",
            ScoreMode::Fine => "fine",
            ScoreMode::Averaged => "averaged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sl" => Some(ScoreMode::Sl),
            "coarse" => Some(ScoreMode::Coarse),
            "fine" => Some(ScoreMode::Fine),
            "averaged" => Some(ScoreMode::Averaged),
            _ => None,
        }
    }

    /// Heads whose scores are averaged in this mode.
    pub fn heads<T: Real>(self, params: &ModelParams<T>) -> Result<Vec<HeadRole>> {
        let roles = params.roles();
        let need = |r: HeadRole| {
            if params.has_head(r) {
                Ok(r)
            } else {
                Err(Error::Config(format!(
                    "score mode {} needs a {} head; model has {:?}",
                    self.name(),
                    r.name(),
                    roles
                )))
            }
        };
        match self {
            ScoreMode::Sl if roles.len() == 1 => Ok(roles),
            ScoreMode::Sl => Err(Error::Config("score mode sl needs a single-head model".into())),
            ScoreMode::Coarse => Ok(alloc::vec![need(HeadRole::Coarse)?]),
            ScoreMode::Fine => Ok(alloc::vec![need(HeadRole::Fine)?]),
            ScoreMode::Averaged => Ok(alloc::vec![need(HeadRole::Coarse)?, need(HeadRole::Fine)?]),
        }
    }
}

/// Per-segment scores for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTrack {
    pub video_id: String,
    pub scores: Vec<f64>,
    pub mode: ScoreMode,
}

/// Scores every segment of `video` from a window of `set_size` segments
/// around it, keeping only the evaluated segment's score.
pub fn score_video<T: Real>(
    params: &ModelParams<T>,
    video: &VideoFeatures,
    set_size: usize,
    mode: ScoreMode,
) -> Result<ScoreTrack> {
    let heads = mode.heads(params)?;
    if video.dim() != params.config().input_dim {
        return Err(Error::dim(
            "score_video",
            &[video.dim()],
            &[params.config().input_dim],
        ));
    }
    let mut scores = Vec::with_capacity(video.num_segments());
    for s in 0..video.num_segments() {
        let window = build_window(video.num_segments(), s, set_size)?;
        let mut tape = Tape::<T>::new();
        let bound = params.bind_frozen(&mut tape);
        let z = tape.constant(video.gather(&window.members));
        let ctx = bound.encode_set(&mut tape, z, None)?;
        let center = tape.gather_rows(ctx, &[window.center_pos])?;
        let mut total = 0.0;
        for &role in &heads {
            let sv = bound.score_segments(&mut tape, role, center)?;
            total += tape.value(sv).item().as_f64();
        }
        let score = total / heads.len() as f64;
        if !score.is_finite() {
            return Err(Error::NonFinite {
                what: format!("score of segment {s} in {}", video.video_id),
            });
        }
        scores.push(score);
    }
    Ok(ScoreTrack {
        video_id: video.video_id.clone(),
        scores,
        mode,
    })
}

/// Indices sorted by descending score, ties by ascending index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn ap_of_ranking(order: &[usize], labels: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Mean over positive segments of the precision at their rank.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("average_precision", &[scores.len()], &[labels.len()]));
    }
    if !labels.iter().any(|&l| l) {
        return Err(Error::domain("average_precision", "no positive labels"));
    }
    Ok(ap_of_ranking(&ranking(scores), labels))
}

/// Outcome of a mean-AP reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct MapReport {
    pub value: f64,
    pub evaluated: usize,
    /// Videos left out because they have no positive segment.
    pub skipped: Vec<String>,
}

fn reduce_map(
    tracks: &[ScoreTrack],
    labels: &[&[f64]],
    threshold: f64,
    per_video: impl Fn(&[f64], &[bool]) -> f64,
) -> Result<MapReport> {
    if tracks.len() != labels.len() {
        return Err(Error::dim("mean_ap", &[tracks.len()], &[labels.len()]));
    }
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = Vec::new();
    for (t, l) in tracks.iter().zip(labels) {
        if t.scores.len() != l.len() {
            return Err(Error::dim("mean_ap", &[t.scores.len()], &[l.len()]));
        }
        let bin: Vec<bool> = l.iter().map(|&v| v > threshold).collect();
        if !bin.iter().any(|&b| b) {
            skipped.push(t.video_id.clone());
            continue;
        }
        sum += per_video(&t.scores, &bin);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::domain("mean_ap", "no video has a positive segment"));
    }
    Ok(MapReport {
        value: sum / evaluated as f64,
        evaluated,
        skipped,
    })
}

/// Unweighted mean of per-video AP; labels are binarized with `> threshold`.
pub fn mean_ap(tracks: &[ScoreTrack], labels: &[&[f64]], threshold: f64) -> Result<MapReport> {
    reduce_map(tracks, labels, threshold, |s, b| ap_of_ranking(&ranking(s), b))
}

/// Like [`mean_ap`] but each ranking is cut to its `k` highest-scored
/// segments; AP averages over the positives that survive the cut.
pub fn top_k_map(tracks: &[ScoreTrack], labels: &[&[f64]], k: usize, threshold: f64) -> Result<MapReport> {
    if k == 0 {
        return Err(Error::domain("top_k_map", "k must be at least 1"));
    }
    reduce_map(tracks, labels, threshold, |s, b| {
        let order = ranking(s);
        ap_of_ranking(&order[..k.min(order.len())], b)
    })
}
