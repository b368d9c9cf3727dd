mod common;

use contig_core::{
    linear_eval, pretrain, retrieval_top1, CoreError, Dataset, EncoderConfig, FeatureOptions, LinearTask, ModelParams,
    TrainConfig,
};
use contig_genetics::{synth_generate, SynthConfig, SynthData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synth(n: usize, seed: u64) -> (SynthData, Dataset) {
    let s = synth_generate(
        &SynthConfig {
            n,
            n_snps: 400,
            n_rare_snps: 100,
            n_genes: 10,
            ..Default::default()
        },
        seed,
    )
    .unwrap();
    let mut d = Dataset::from_synth(&s, &FeatureOptions::default()).unwrap();
    d.standardize();
    (s, d)
}

fn desk_encoder() -> EncoderConfig {
    EncoderConfig {
        hidden_width: 64,
        repr_dim: 64,
        ..Default::default()
    }
}

#[test]
fn two_epochs_on_64_individuals_descend() {
    let (_, d) = synth(64, 1);
    let out = pretrain(&d, &desk_encoder(), &TrainConfig { epochs: 2, batch_size: 16, ..Default::default() }).unwrap();
    let means = out.epoch_means();
    assert_eq!(means.len(), 2);
    assert!(means[1] < means[0], "{means:?}");
    assert!(out.trace.iter().all(|r| r.loss.is_finite()));
    assert_eq!(out.trace.len(), 8);
}

#[test]
fn identical_seed_gives_identical_run() {
    let (_, d) = synth(96, 2);
    let cfg = TrainConfig { epochs: 2, batch_size: 32, ..Default::default() };
    let a = pretrain(&d, &desk_encoder(), &cfg).unwrap();
    let b = pretrain(&d, &desk_encoder(), &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.params.to_json(), b.params.to_json());
    let c = pretrain(&d, &desk_encoder(), &TrainConfig { seed: 7, ..cfg }).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let (_, d) = synth(64, 3);
    let cfg = TrainConfig { epochs: 2, batch_size: 16, lr: 0.0, ..Default::default() };
    let out = pretrain(&d, &desk_encoder(), &cfg).unwrap();
    let init = ModelParams::init(&contig_core::encoder_config_for(&d, &desk_encoder()), cfg.seed).unwrap();
    assert_eq!(out.params.weights, init.weights);
    // running statistics are buffers, not parameters, and do move
    assert_ne!(out.params.batchnorm[0][0].running_mean, init.batchnorm[0][0].running_mean);
}

#[test]
fn runaway_learning_rate_aborts_with_diagnostics() {
    let (_, d) = synth(64, 4);
    let cfg = TrainConfig { epochs: 3, batch_size: 16, lr: 1e300, ..Default::default() };
    match pretrain(&d, &desk_encoder(), &cfg) {
        Err(CoreError::NonFiniteLoss { batch_ids, step, lr, .. }) => {
            assert!(step > 0);
            assert!(lr > 0.0);
            assert!(!batch_ids.is_empty());
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("training with lr=1e300 should not finish"),
    }
}

#[test]
fn empty_and_invalid_inputs_are_rejected() {
    let (_, d) = synth(64, 5);
    let one = d.subset(&[0]);
    assert!(pretrain(&one, &desk_encoder(), &TrainConfig::default()).is_err());
    assert!(pretrain(&d, &desk_encoder(), &TrainConfig { batch_size: 1, ..Default::default() }).is_err());
    assert!(pretrain(&d, &desk_encoder(), &TrainConfig { scheme: "middle".into(), ..Default::default() }).is_err());
}

#[test]
fn training_helps_retrieval_and_linear_probes() {
    let (s, d) = synth(800, 6);
    let train: Vec<usize> = (0..600).collect();
    let test: Vec<usize> = (600..800).collect();
    let cfg = TrainConfig { epochs: 20, ..Default::default() };
    let out = pretrain(&d.subset(&train), &desk_encoder(), &cfg).unwrap();
    assert!(out.trace.iter().all(|r| r.loss.is_finite()));

    let pgs = d.modalities.iter().position(|m| m.name == "pgs").unwrap();
    let held: Vec<usize> = test.iter().copied().filter(|&i| d.modalities[pgs].present[i]).take(32).collect();
    assert_eq!(held.len(), 32);
    let acc = retrieval_top1(&out.params, &d, pgs, &held).unwrap();
    assert!(acc > 3.0 / 32.0, "top-1 {acc}");

    let y = |rows: &[usize]| rows.iter().map(|&i| s.truth.latent(i, 0)).collect::<Vec<f64>>();
    let trained = linear_eval(
        &out.params,
        &d.images_tensor(&train),
        &y(&train),
        &d.images_tensor(&test),
        &y(&test),
        LinearTask::Regression,
    )
    .unwrap();
    let random = ModelParams::init(&out.params.config, 99).unwrap();
    let baseline = linear_eval(
        &random,
        &d.images_tensor(&train),
        &y(&train),
        &d.images_tensor(&test),
        &y(&test),
        LinearTask::Regression,
    )
    .unwrap();
    let (r2, r2_random) = (trained.r2.unwrap(), baseline.r2.unwrap());
    assert!(r2 > 0.2, "held-out R² {r2}");
    assert!(r2 > r2_random, "trained {r2} vs random init {r2_random}");

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let labels: Vec<f64> = (0..800).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let null = linear_eval(
        &out.params,
        &d.images_tensor(&train),
        &labels[..600],
        &d.images_tensor(&test),
        &labels[600..],
        LinearTask::Classification,
    )
    .unwrap();
    let auc = null.auc.unwrap();
    assert!((0.4..=0.6).contains(&auc), "random-label AUC {auc}");
}
