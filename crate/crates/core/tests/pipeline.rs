use proptest::prelude::*;
use vhd_core::eval::{build_window, mean_ap, score_video, ScoreMode};
use vhd_core::model::{HeadRole, ModelConfig, ModelParams};
use vhd_core::optim::StepSchedule;
use vhd_core::rng::{component_seed, Stream};
use vhd_core::synth::{gen_synthetic_corpus, Split, SynthParams, SynthSpec};
use vhd_core::train::{epoch_means, train_dl, train_sl, Ablation, TrainConfig};

fn params() -> SynthParams {
    SynthParams {
        dim: 16,
        videos_per_category: 20,
        segments_per_video: 16,
        ..SynthParams::default()
    }
}

fn model() -> ModelConfig {
    let mut m = ModelConfig::desk(16);
    m.encoder.num_layers = 1;
    m.head_hidden = [16, 8];
    m
}

fn train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        set_size: 8,
        schedule: StepSchedule {
            base_lr: 0.01,
            ..StepSchedule::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn sl_training_beats_its_initialization() {
    let spec = SynthSpec::orthogonal(&params(), 0).unwrap();
    let corpus = gen_synthetic_corpus(&spec, 0).unwrap();
    let train = corpus.select("surfing", Split::Train);
    let test = corpus.select("surfing", Split::Test);
    let labels: Vec<&[f64]> = test.iter().map(|v| v.labels().unwrap()).collect();
    let map_of = |p: &ModelParams<f32>| {
        let tracks: Vec<_> = test
            .iter()
            .map(|v| score_video(p, v, 8, ScoreMode::Sl).unwrap())
            .collect();
        mean_ap(&tracks, &labels, 0.5).unwrap().value
    };

    let out = train_sl::<f32, _>(&train, &model(), &train_config(30)).unwrap();
    let before =
        ModelParams::<f32>::init(&model(), &[HeadRole::Main], component_seed(0, Stream::Init)).unwrap();
    assert_eq!(epoch_means(&out.log).len(), 30);
    let (trained, untrained) = (map_of(&out.params), map_of(&before));
    assert!(trained > untrained + 0.1, "{trained} vs {untrained}");
}

#[test]
fn dl_ablations_produce_the_requested_heads() {
    let spec = SynthSpec::orthogonal(&params(), 1).unwrap();
    let corpus = gen_synthetic_corpus(&spec, 1).unwrap();
    let src = corpus.select("surfing", Split::Train);
    let tgt: Vec<_> = corpus
        .select("parkour", Split::Train)
        .iter()
        .map(|v| v.without_labels())
        .collect();
    let cases = [
        (Ablation::default(), vec![HeadRole::Coarse, HeadRole::Fine]),
        (
            Ablation {
                coarse_only: true,
                ..Ablation::default()
            },
            vec![HeadRole::Coarse],
        ),
        (
            Ablation {
                fine_only: true,
                ..Ablation::default()
            },
            vec![HeadRole::Fine],
        ),
    ];
    for (ablation, roles) in cases {
        let cfg = TrainConfig {
            ablation,
            steps_per_epoch: Some(4),
            ..train_config(1)
        };
        let out = train_dl::<f32, _, _>(&src, &tgt, &model(), &cfg).unwrap();
        assert_eq!(out.params.roles(), roles);
        assert_eq!(out.log.len(), 4);
    }
}

proptest! {
    #[test]
    fn windows_are_contiguous_runs_around_the_center(len in 1usize..40, n in 1usize..30, pick in 0usize..40) {
        let s = pick % len;
        let w = build_window(len, s, n).unwrap();
        prop_assert_eq!(w.members.len(), n);
        prop_assert_eq!(w.members[w.center_pos], s);
        prop_assert!(w.members.windows(2).all(|p| p[1] == p[0] || p[1] == p[0] + 1));
        if n <= len {
            let mut sorted = w.members.clone();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), n);
        }
    }
}
