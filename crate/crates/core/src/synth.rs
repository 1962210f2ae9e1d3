//! Synthetic highlight corpora with known ground truth.
//!
//! Each segment carries a latent highlight strength `h ~ U[0, 1]`. Its
//! feature vector is
//!
//! ```text
//! prototype[category] + offset[video] + h·(α·shared + β·private[category]) + σ_n·ε
//! ```
//!
//! with a per-video offset `offset ~ ρ·N(0, I)`. The offset is constant
//! inside a video, so it shifts every segment of that video alike: scores
//! compared across videos are confounded by it, scores compared within one
//! video are not.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::VideoFeatures;
use crate::error::{Error, Result};
use crate::rng::{component_rng, Stream};
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
pub struct CategorySpec {
    pub name: String,
    pub prototype: Vec<f64>,
    pub private_direction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub dim: usize,
    pub categories: Vec<CategorySpec>,
    pub shared_direction: Vec<f64>,
    /// Weight of the shared highlight direction.
    pub alpha: f64,
    /// Weight of the category-private highlight direction.
    pub beta: f64,
    /// Scale of the per-video offset.
    pub rho: f64,
    /// Scale of the per-segment noise.
    pub noise: f64,
    pub videos_per_category: usize,
    pub segments_per_video: usize,
    /// Fraction of each category's videos assigned to the test split.
    pub test_fraction: f64,
    /// Emit `h` itself as the label instead of `1[h > 0.5]`.
    pub continuous_labels: bool,
}

/// Knobs for [`SynthSpec::orthogonal`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub dim: usize,
    pub categories: Vec<String>,
    pub prototype_scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub noise: f64,
    pub videos_per_category: usize,
    pub segments_per_video: usize,
    pub test_fraction: f64,
    pub continuous_labels: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            dim: 32,
            categories: alloc::vec!["surfing".into(), "parkour".into()],
            prototype_scale: 1.0,
            alpha: 1.0,
            beta: 1.0,
            rho: 2.0,
            noise: 0.1,
            videos_per_category: 100,
            segments_per_video: 40,
            test_fraction: 0.2,
            continuous_labels: false,
        }
    }
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    Float::sqrt(dot(a, a))
}

impl SynthSpec {
    /// Draws one shared direction plus a private direction and a prototype
    /// direction per category, all mutually orthonormal.
    pub fn orthogonal(params: &SynthParams, seed: u64) -> Result<Self> {
        let needed = 1 + 2 * params.categories.len();
        if params.categories.is_empty() {
            return Err(Error::domain("synth", "at least one category is required"));
        }
        if params.dim < needed {
            return Err(Error::domain(
                "synth",
                format!(
                    "feature dim {} cannot hold {} mutually orthogonal vectors \
                     (shared + {} private highlight directions + {} category prototypes)",
                    params.dim,
                    needed,
                    params.categories.len(),
                    params.categories.len()
                ),
            ));
        }
        let mut rng = component_rng(seed, Stream::Synth);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(needed);
        while basis.len() < needed {
            let mut v = gaussian_vec(&mut rng, params.dim);
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let n = norm(&v);
            if n > 1e-6 {
                v.iter_mut().for_each(|x| *x /= n);
                basis.push(v);
            }
        }
        let shared_direction = basis[0].clone();
        let categories = params
            .categories
            .iter()
            .enumerate()
            .map(|(i, name)| CategorySpec {
                name: name.clone(),
                private_direction: basis[1 + 2 * i].clone(),
                prototype: basis[2 + 2 * i]
                    .iter()
                    .map(|x| x * params.prototype_scale)
                    .collect(),
            })
            .collect();
        Ok(SynthSpec {
            dim: params.dim,
            categories,
            shared_direction,
            alpha: params.alpha,
            beta: params.beta,
            rho: params.rho,
            noise: params.noise,
            videos_per_category: params.videos_per_category,
            segments_per_video: params.segments_per_video,
            test_fraction: params.test_fraction,
            continuous_labels: params.continuous_labels,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Ground truth for one generated video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTruth {
    pub video_id: String,
    pub category: String,
    pub split: Split,
    pub latent: Vec<f64>,
    pub offset: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub videos: Vec<VideoFeatures>,
    pub truth: Vec<VideoTruth>,
    pub warnings: Vec<String>,
}

impl SynthCorpus {
    /// Videos of `category` in `split`, labels kept.
    pub fn select(&self, category: &str, split: Split) -> Vec<VideoFeatures> {
        self.videos
            .iter()
            .zip(&self.truth)
            .filter(|(_, t)| t.category == category && t.split == split)
            .map(|(v, _)| v.clone())
            .collect()
    }
}

fn unit(name: &str, v: &[f64], dim: usize, warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    if v.len() != dim {
        return Err(Error::dim("synth", &[dim], &[v.len()]));
    }
    let n = norm(v);
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::domain(
            "synth",
            format!("{name} direction is zero or non-finite"),
        ));
    }
    if (n - 1.0).abs() > 1e-9 {
        warnings.push(format!("{name} direction had norm {n:.6}; normalized"));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Generates the corpus described by `spec`. `(spec, seed)` determines the
/// output bit for bit.
pub fn gen_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    let d = spec.dim;
    if d == 0 || spec.categories.is_empty() {
        return Err(Error::domain(
            "synth",
            "need a positive dim and at least one category",
        ));
    }
    if 1 + spec.categories.len() > d {
        return Err(Error::domain(
            "synth",
            format!(
                "feature dim {d} cannot hold {} orthogonal highlight directions",
                1 + spec.categories.len()
            ),
        ));
    }
    if spec.videos_per_category == 0 || spec.segments_per_video == 0 {
        return Err(Error::domain(
            "synth",
            "videos and segments per video must be positive",
        ));
    }
    if !(0.0..1.0).contains(&spec.test_fraction) {
        return Err(Error::domain("synth", "test_fraction must lie in [0, 1)"));
    }
    for (name, v) in [
        ("rho", spec.rho),
        ("noise", spec.noise),
        ("alpha", spec.alpha),
        ("beta", spec.beta),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::domain(
                "synth",
                format!("{name} must be finite and non-negative"),
            ));
        }
    }
    let mut warnings = Vec::new();
    let shared = unit("shared", &spec.shared_direction, d, &mut warnings)?;
    let mut rng = component_rng(seed, Stream::Synth);
    // Skip past the draws used to build orthogonal directions from the same seed.
    rng.set_word_pos(1 << 40);

    let n_test = Float::round((spec.videos_per_category as f64) * spec.test_fraction) as usize;
    let n_train = spec.videos_per_category - n_test;
    let mut videos = Vec::new();
    let mut truth = Vec::new();
    for cat in &spec.categories {
        let private = unit(
            &format!("{} private", cat.name),
            &cat.private_direction,
            d,
            &mut warnings,
        )?;
        if cat.prototype.len() != d {
            return Err(Error::dim("synth prototype", &[d], &[cat.prototype.len()]));
        }
        let highlight: Vec<f64> = shared
            .iter()
            .zip(&private)
            .map(|(s, p)| spec.alpha * s + spec.beta * p)
            .collect();
        for v in 0..spec.videos_per_category {
            let offset: Vec<f64> = gaussian_vec(&mut rng, d).iter().map(|x| x * spec.rho).collect();
            let mut feats = Vec::with_capacity(spec.segments_per_video * d);
            let mut latent = Vec::with_capacity(spec.segments_per_video);
            for _ in 0..spec.segments_per_video {
                let h: f64 = rng.random();
                for j in 0..d {
                    let eps: f64 = rng.sample(StandardNormal);
                    let x = cat.prototype[j] + offset[j] + h * highlight[j] + spec.noise * eps;
                    feats.push(x as f32);
                }
                latent.push(h);
            }
            let labels = latent
                .iter()
                .map(|&h| {
                    if spec.continuous_labels {
                        h
                    } else if h > 0.5 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let video_id = format!("{}_{v:04}", cat.name);
            videos.push(VideoFeatures::new(
                video_id.clone(),
                cat.name.clone(),
                d,
                feats,
                Some(labels),
            )?);
            truth.push(VideoTruth {
                video_id,
                category: cat.name.clone(),
                split: if v < n_train { Split::Train } else { Split::Test },
                latent,
                offset,
            });
        }
    }
    Ok(SynthCorpus {
        videos,
        truth,
        warnings,
    })
}
