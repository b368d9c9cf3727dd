#![allow(dead_code)]

use contig_core::{Dataset, EncoderConfig, GeneticModality, HiddenVariant, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Double-loop `Σ_j −log(exp(s_jj) / D_j)`, no stabilization.
pub fn oracle_pair(a: &[Vec<f64>], b: &[Vec<f64>], tau: f64, exclude_positive: bool) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for j in 0..n {
        let mut denom = 0.0;
        for k in 0..n {
            if exclude_positive && k == j {
                continue;
            }
            denom += (cos(&a[j], &b[k]) / tau).exp();
        }
        total -= ((cos(&a[j], &b[j]) / tau).exp() / denom).ln();
    }
    total
}

pub fn oracle_cont(v: &[Vec<f64>], g: &[Vec<f64>], tau: f64, lambda: f64, exclude: bool) -> f64 {
    lambda * oracle_pair(v, g, tau, exclude) + (1.0 - lambda) * oracle_pair(g, v, tau, exclude)
}

/// Sum over modalities of the filtered pair terms; `None` if every term has
/// under two rows.
pub fn oracle_multi(
    v: &[Vec<f64>],
    g: &[Vec<Vec<f64>>],
    present: &[Vec<bool>],
    tau: f64,
    lambda: f64,
    exclude: bool,
    inner: bool,
) -> Option<f64> {
    let b = v.len();
    let mut total = None;
    for m in 0..g.len() {
        let rows: Vec<usize> = (0..b)
            .filter(|&i| if inner { present.iter().all(|p| p[i]) } else { present[m][i] })
            .collect();
        if rows.len() < 2 {
            continue;
        }
        let vs: Vec<Vec<f64>> = rows.iter().map(|&i| v[i].clone()).collect();
        let gs: Vec<Vec<f64>> = rows.iter().map(|&i| g[m][i].clone()).collect();
        *total.get_or_insert(0.0) += oracle_cont(&vs, &gs, tau, lambda, exclude);
    }
    total
}

pub fn small_config(image_dim: usize, genetic_dims: &[usize], d: usize) -> EncoderConfig {
    EncoderConfig {
        image_input_dim: image_dim,
        genetic_input_dims: genetic_dims.to_vec(),
        hidden_variant: HiddenVariant::H1,
        hidden_width: d,
        repr_dim: d,
        proj_dim: d,
    }
}

/// Params with non-trivial batchnorm running statistics.
pub fn small_params(cfg: &EncoderConfig, seed: u64) -> ModelParams {
    let mut params = ModelParams::init(cfg, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    for bn in params.batchnorm.iter_mut().flatten() {
        for v in bn.running_mean.iter_mut() {
            *v = r.random_range(-0.3..0.3);
        }
        for v in bn.running_var.iter_mut() {
            *v = r.random_range(0.5..2.0);
        }
    }
    params
}

/// Random dataset; `present[m](i)` decides modality presence.
pub fn random_dataset(n: usize, image_dim: usize, dims: &[usize], present: &[&dyn Fn(usize) -> bool], seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut gen = |k: usize| (0..k).map(|_| r.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let images = gen(n * image_dim);
    let modalities = dims
        .iter()
        .enumerate()
        .map(|(m, &d)| {
            let mask: Vec<bool> = (0..n).map(|i| present[m](i)).collect();
            let mut data = gen(n * d);
            for i in 0..n {
                if !mask[i] {
                    data[i * d..(i + 1) * d].fill(0.0);
                }
            }
            GeneticModality {
                name: format!("mod{m}"),
                feature_ids: (0..d).map(|j| format!("m{m}f{j}")).collect(),
                data,
                present: mask,
            }
        })
        .collect();
    Dataset {
        ids: (0..n).map(|i| format!("id{i:03}")).collect(),
        image_dim,
        images,
        modalities,
    }
}
