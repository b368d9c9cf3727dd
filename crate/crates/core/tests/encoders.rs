mod common;

use common::*;
use contig_autodiff::{Graph, Tensor};
use contig_core::{EncoderConfig, Head, HiddenVariant, ModelParams};
use proptest::prelude::*;

fn dense(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|j| b.get(0, j) + (0..w.rows()).map(|i| x[i] * w.get(i, j)).sum::<f64>())
        .collect()
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

fn mlp(x: &[f64], m: &contig_core::Mlp2<Tensor>) -> Vec<f64> {
    let h = relu(dense(x, &m.l1.w, &m.l1.b));
    dense(&h, &m.l2.w, &m.l2.b)
}

#[test]
fn seed_42_forward_matches_scripted_pass() {
    let cfg = EncoderConfig {
        image_input_dim: 7,
        genetic_input_dims: vec![4, 6],
        hidden_variant: HiddenVariant::H12,
        hidden_width: 9,
        repr_dim: 5,
        proj_dim: 3,
    };
    let params = small_params(&cfg, 42);
    let mut r = rng(1);
    let images = random_rows(&mut r, 3, 7);
    let genetics = random_rows(&mut r, 3, 6);

    let zv = params.image_embeddings(&Tensor::from_rows(&images).unwrap()).unwrap();
    let hv = params.image_representations(&Tensor::from_rows(&images).unwrap()).unwrap();
    for (i, x) in images.iter().enumerate() {
        let h = mlp(x, &params.weights.image);
        let z = mlp(&h, &params.weights.head_image);
        for j in 0..5 {
            assert!((hv.get(i, j) - h[j]).abs() < 1e-12);
        }
        for j in 0..3 {
            assert!((zv.get(i, j) - z[j]).abs() < 1e-12);
        }
    }

    let zg = params.genetic_embeddings(1, &Tensor::from_rows(&genetics).unwrap()).unwrap();
    for (i, x) in genetics.iter().enumerate() {
        let mut h = x.clone();
        for (block, bn) in params.weights.genetic[1].iter().zip(&params.batchnorm[1]) {
            let a = relu(dense(&h, &block.linear.w, &block.linear.b));
            h = (0..a.len())
                .map(|j| {
                    (a[j] - bn.running_mean[j]) / (bn.running_var[j] + bn.eps).sqrt() * block.gamma.get(0, j)
                        + block.beta.get(0, j)
                })
                .collect();
        }
        let z = mlp(&h, &params.weights.head_genetic[1]);
        for j in 0..3 {
            assert!((zg.get(i, j) - z[j]).abs() < 1e-12, "row {i} col {j}");
        }
    }
}

#[test]
fn init_is_seeded() {
    let cfg = small_config(5, &[3], 8);
    let a = ModelParams::init(&cfg, 42).unwrap();
    let b = ModelParams::init(&cfg, 42).unwrap();
    let c = ModelParams::init(&cfg, 43).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_ne!(a.weights, c.weights);
    let bound = 1.0 / 5f64.sqrt();
    assert!(a.weights.image.l1.w.data().iter().all(|v| v.abs() <= bound));
}

#[test]
fn default_projection_size() {
    let cfg = EncoderConfig::default();
    assert_eq!(cfg.proj_dim, 128);
    assert_eq!(cfg.hidden_width, 2048);
}

#[test]
fn single_row_equals_row_of_batch_in_eval_mode() {
    let cfg = small_config(5, &[4], 8);
    let params = small_params(&cfg, 3);
    let mut r = rng(2);
    let x = random_rows(&mut r, 3, 5);
    let g = random_rows(&mut r, 3, 4);
    let batch_v = params.image_embeddings(&Tensor::from_rows(&x).unwrap()).unwrap();
    let batch_g = params.genetic_embeddings(0, &Tensor::from_rows(&g).unwrap()).unwrap();
    for i in 0..3 {
        let one_v = params.image_embeddings(&Tensor::from_rows(&x[i..i + 1]).unwrap()).unwrap();
        let one_g = params.genetic_embeddings(0, &Tensor::from_rows(&g[i..i + 1]).unwrap()).unwrap();
        assert_eq!(one_v.row(0), batch_v.row(i));
        assert_eq!(one_g.row(0), batch_g.row(i));
    }
}

fn head_norm_sq(params: &ModelParams, h: &Tensor) -> (f64, Vec<f64>) {
    let mut g = Graph::new();
    let w = params.bind(&mut g, true);
    let x = g.constant(h.clone());
    let z = params.project(&mut g, &w, Head::Image, x).unwrap();
    let sq = g.mul(z, z).unwrap();
    let s = g.sum(sq);
    g.backward(s).unwrap();
    (g.value(s).item(), g.grad(w.head_image.l1.w).unwrap().data().to_vec())
}

#[test]
fn squared_norm_gradient_wrt_first_head_layer() {
    let cfg = small_config(4, &[2], 6);
    let params = small_params(&cfg, 5);
    let mut r = rng(3);
    let h = Tensor::from_rows(&random_rows(&mut r, 4, 6)).unwrap();
    let (_, grad) = head_norm_sq(&params, &h);
    let step = 1e-6;
    for k in 0..grad.len() {
        let at = |d: f64| {
            let mut p = params.clone();
            p.weights.head_image.l1.w.data_mut()[k] += d;
            head_norm_sq(&p, &h).0
        };
        let fd = (at(step) - at(-step)) / (2.0 * step);
        let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
        assert!(rel < 1e-5, "entry {k}: {} vs {fd}", grad[k]);
    }
}

#[test]
fn variant_none_has_no_encoder_parameters() {
    let cfg = EncoderConfig {
        hidden_variant: HiddenVariant::None,
        ..small_config(4, &[3, 5], 6)
    };
    let params = ModelParams::init(&cfg, 1).unwrap();
    assert!(params.weights.genetic.iter().all(Vec::is_empty));
    assert_eq!(params.weights.head_genetic[1].l1.w.rows(), 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_shapes(b in 1usize..9, variant in 0usize..3) {
        let hidden_variant = [HiddenVariant::None, HiddenVariant::H1, HiddenVariant::H12][variant];
        let cfg = EncoderConfig { hidden_variant, ..small_config(5, &[3], 7) };
        let params = ModelParams::init(&cfg, 9).unwrap();
        let mut r = rng(b as u64);
        let x = Tensor::from_rows(&random_rows(&mut r, b, 5)).unwrap();
        let gx = Tensor::from_rows(&random_rows(&mut r, b, 3)).unwrap();
        let hv = params.image_representations(&x).unwrap();
        prop_assert_eq!(hv.shape(), &[b, 7][..]);
        prop_assert_eq!(params.image_embeddings(&x).unwrap().shape().to_vec(), vec![b, 7]);
        let mut g = Graph::new();
        let w = params.bind(&mut g, false);
        let xg = g.constant(gx.clone());
        let h = params.encode_genetics(&mut g, &w, 0, xg).unwrap();
        let want = if hidden_variant == HiddenVariant::None { 3 } else { 7 };
        prop_assert_eq!(g.value(h).shape(), &[b, want][..]);
        prop_assert_eq!(params.genetic_embeddings(0, &gx).unwrap().shape().to_vec(), vec![b, 7]);
    }

    #[test]
    fn eval_forward_is_pure(seed in 0u64..1000) {
        let cfg = small_config(4, &[3], 5);
        let params = small_params(&cfg, seed);
        let mut r = rng(seed);
        let gx = Tensor::from_rows(&random_rows(&mut r, 4, 3)).unwrap();
        let a = params.genetic_embeddings(0, &gx).unwrap();
        let b = params.genetic_embeddings(0, &gx).unwrap();
        prop_assert_eq!(a, b);
    }
}
