//! Per-video features and the set samplers used during training.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Ordered segment features of one video, optionally with highlight labels.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    pub category: String,
    dim: usize,
    features: Vec<f32>,
    labels: Option<Vec<f64>>,
}

impl VideoFeatures {
    pub fn new(
        video_id: impl Into<String>,
        category: impl Into<String>,
        dim: usize,
        features: Vec<f32>,
        labels: Option<Vec<f64>>,
    ) -> Result<Self> {
        if dim == 0 || features.is_empty() || !features.len().is_multiple_of(dim) {
            return Err(Error::dim("video features", &[features.len()], &[dim]));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "segment features".into(),
            });
        }
        let n = features.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::dim("video labels", &[n], &[l.len()]));
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "segment labels".into(),
                });
            }
        }
        Ok(VideoFeatures {
            video_id: video_id.into(),
            category: category.into(),
            dim,
            features,
            labels,
        })
    }

    pub fn num_segments(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn segment(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn without_labels(&self) -> Self {
        VideoFeatures {
            labels: None,
            ..self.clone()
        }
    }

    /// Rows `indices` as an `[indices.len() × dim]` tensor.
    pub fn gather<T: Real>(&self, indices: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend(self.segment(i).iter().map(|&v| T::of(v as f64)));
        }
        Tensor::new(&[indices.len(), self.dim], data).expect("gather shape")
    }
}

/// Read access to a collection of videos. Training loops go through this
/// trait so that tests can observe which corpus is touched.
pub trait VideoSource {
    fn num_videos(&self) -> usize;
    fn video(&self, i: usize) -> &VideoFeatures;
}

impl VideoSource for [VideoFeatures] {
    fn num_videos(&self) -> usize {
        self.len()
    }
    fn video(&self, i: usize) -> &VideoFeatures {
        &self[i]
    }
}

impl VideoSource for Vec<VideoFeatures> {
    fn num_videos(&self) -> usize {
        self.len()
    }
    fn video(&self, i: usize) -> &VideoFeatures {
        &self[i]
    }
}

impl<S: VideoSource + ?Sized> VideoSource for &S {
    fn num_videos(&self) -> usize {
        (**self).num_videos()
    }
    fn video(&self, i: usize) -> &VideoFeatures {
        (**self).video(i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetKind {
    Source,
    Target,
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetMember {
    pub video_id: String,
    pub segment_index: usize,
    pub features: Vec<f32>,
    /// Highlight label for source sets, category label (1 = target) for
    /// mixed sets, absent for target sets.
    pub label: Option<f64>,
}

/// The unit of learning: `N` segments with labels and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSet {
    pub kind: SetKind,
    pub members: Vec<SetMember>,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn features<T: Real>(&self) -> Tensor<T> {
        let d = self.members.first().map_or(0, |m| m.features.len());
        let data = self
            .members
            .iter()
            .flat_map(|m| m.features.iter().map(|&v| T::of(v as f64)))
            .collect();
        Tensor::new(&[self.members.len(), d], data).expect("set shape")
    }

    pub fn labels<T: Real>(&self) -> Option<Vec<T>> {
        self.members.iter().map(|m| m.label.map(T::of)).collect()
    }
}

/// `n` indices from `0..num_segments`: distinct when the video is long
/// enough, otherwise every segment once plus uniform duplicates.
pub fn sample_indices<R: Rng + ?Sized>(num_segments: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if num_segments >= n {
        return index::sample(rng, num_segments, n).into_vec();
    }
    let mut out: Vec<usize> = (0..num_segments).collect();
    while out.len() < n {
        out.push(rng.random_range(0..num_segments));
    }
    out.shuffle(rng);
    out
}

fn build_set(vf: &VideoFeatures, idx: Vec<usize>, kind: SetKind) -> SegmentSet {
    let labels = match kind {
        SetKind::Target => None,
        _ => vf.labels(),
    };
    let members = idx
        .into_iter()
        .map(|i| SetMember {
            video_id: vf.video_id.clone(),
            segment_index: i,
            features: vf.segment(i).to_vec(),
            label: labels.map(|l| l[i]),
        })
        .collect();
    SegmentSet { kind, members }
}

/// Labeled set of `n` segments drawn from one video.
pub fn sample_training_set<R: Rng + ?Sized>(vf: &VideoFeatures, n: usize, rng: &mut R) -> Result<SegmentSet> {
    if n < 2 {
        return Err(Error::domain(
            "sample_training_set",
            "set size must be at least 2",
        ));
    }
    if vf.labels().is_none() {
        return Err(Error::domain(
            "sample_training_set",
            format!("video {} has no labels", vf.video_id),
        ));
    }
    let idx = sample_indices(vf.num_segments(), n, rng);
    Ok(build_set(vf, idx, SetKind::Source))
}

/// Unlabeled set of `n` segments drawn from one target-category video. Any
/// labels the video carries are dropped.
pub fn sample_target_set<R: Rng + ?Sized>(vf: &VideoFeatures, n: usize, rng: &mut R) -> Result<SegmentSet> {
    if n < 2 {
        return Err(Error::domain("sample_target_set", "set size must be at least 2"));
    }
    let idx = sample_indices(vf.num_segments(), n, rng);
    Ok(build_set(vf, idx, SetKind::Target))
}

/// Half of the members from `source` (label 0), half from `target`
/// (label 1), in shuffled order.
pub fn build_mixed_set<R: Rng + ?Sized>(
    source: &SegmentSet,
    target: &SegmentSet,
    rng: &mut R,
) -> Result<SegmentSet> {
    let n = source.len();
    if target.len() != n {
        return Err(Error::dim("build_mixed_set", &[n], &[target.len()]));
    }
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::domain(
            "build_mixed_set",
            format!("set size must be even and positive, got {n}"),
        ));
    }
    let half = n / 2;
    let mut members = Vec::with_capacity(n);
    for (set, label) in [(source, 0.0), (target, 1.0)] {
        for i in index::sample(rng, n, half) {
            let m = &set.members[i];
            members.push(SetMember {
                label: Some(label),
                ..m.clone()
            });
        }
    }
    members.shuffle(rng);
    Ok(SegmentSet {
        kind: SetKind::Mixed,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{component_rng, Stream};
    use alloc::collections::BTreeSet;
    use alloc::vec;

    fn video(id: &str, n: usize, d: usize) -> VideoFeatures {
        let feats = (0..n * d).map(|v| v as f32).collect();
        let labels = (0..n).map(|i| (i % 2) as f64).collect();
        VideoFeatures::new(id, "cat", d, feats, Some(labels)).unwrap()
    }

    #[test]
    fn validation() {
        assert!(VideoFeatures::new("v", "c", 4, vec![0.0; 7], None).is_err());
        assert!(VideoFeatures::new("v", "c", 4, vec![0.0; 8], Some(vec![0.0; 3])).is_err());
        assert!(VideoFeatures::new("v", "c", 2, vec![0.0, f32::NAN], None).is_err());
        assert!(VideoFeatures::new("v", "c", 2, vec![], None).is_err());
    }

    #[test]
    fn distinct_indices_when_video_is_long() {
        let mut rng = component_rng(0, Stream::Sampling);
        let set = sample_training_set(&video("a", 30, 3), 20, &mut rng).unwrap();
        let idx: BTreeSet<usize> = set.members.iter().map(|m| m.segment_index).collect();
        assert_eq!(set.len(), 20);
        assert_eq!(idx.len(), 20);
        assert!(set.members.iter().all(|m| m.video_id == "a"));
    }

    #[test]
    fn short_video_duplicates() {
        let mut rng = component_rng(1, Stream::Sampling);
        let set = sample_training_set(&video("a", 3, 2), 4, &mut rng).unwrap();
        let idx: Vec<usize> = set.members.iter().map(|m| m.segment_index).collect();
        let distinct: BTreeSet<usize> = idx.iter().copied().collect();
        assert_eq!(idx.len(), 4);
        assert_eq!(distinct, [0, 1, 2].into_iter().collect());
    }

    #[test]
    fn sampling_is_seeded() {
        let v = video("a", 50, 2);
        let a = sample_training_set(&v, 10, &mut component_rng(9, Stream::Sampling)).unwrap();
        let b = sample_training_set(&v, 10, &mut component_rng(9, Stream::Sampling)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unlabeled_video_is_rejected_for_training() {
        let v = video("a", 5, 2).without_labels();
        let mut rng = component_rng(0, Stream::Sampling);
        assert!(matches!(
            sample_training_set(&v, 4, &mut rng),
            Err(Error::Domain { .. })
        ));
        let t = sample_target_set(&v, 4, &mut rng).unwrap();
        assert!(t.members.iter().all(|m| m.label.is_none()));
    }

    #[test]
    fn mixed_set_halves() {
        let mut rng = component_rng(2, Stream::Sampling);
        let s = sample_training_set(&video("s", 10, 2), 4, &mut rng).unwrap();
        let t = sample_target_set(&video("t", 10, 2), 4, &mut rng).unwrap();
        let m = build_mixed_set(&s, &t, &mut rng).unwrap();
        assert_eq!(m.kind, SetKind::Mixed);
        let labels: Vec<f64> = m.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1.0).count(), 2);
        assert_eq!(labels.iter().filter(|&&l| l == 0.0).count(), 2);
        for mem in &m.members {
            let origin = if mem.label == Some(1.0) { &t } else { &s };
            assert!(origin
                .members
                .iter()
                .any(|o| o.video_id == mem.video_id && o.segment_index == mem.segment_index));
        }
    }

    #[test]
    fn mixed_set_rejects_odd_sizes() {
        let mut rng = component_rng(2, Stream::Sampling);
        let s = sample_training_set(&video("s", 10, 2), 3, &mut rng).unwrap();
        let t = sample_target_set(&video("t", 10, 2), 3, &mut rng).unwrap();
        assert!(matches!(
            build_mixed_set(&s, &t, &mut rng),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn mixed_sets_vary_with_seed() {
        let s_video = video("s", 40, 2);
        let t_video = video("t", 40, 2);
        let mut base = component_rng(0, Stream::Sampling);
        let s = sample_training_set(&s_video, 8, &mut base).unwrap();
        let t = sample_target_set(&t_video, 8, &mut base).unwrap();
        let key = |m: &SegmentSet| {
            let mut k: Vec<(String, usize)> = m
                .members
                .iter()
                .map(|x| (x.video_id.clone(), x.segment_index))
                .collect();
            k.sort();
            k
        };
        let mut differences = 0;
        for trial in 0..100u64 {
            let a = build_mixed_set(&s, &t, &mut component_rng(2 * trial, Stream::Sampling)).unwrap();
            let b = build_mixed_set(&s, &t, &mut component_rng(2 * trial + 1, Stream::Sampling)).unwrap();
            if key(&a) != key(&b) {
                differences += 1;
            }
        }
        assert!(differences >= 1);
    }
}
