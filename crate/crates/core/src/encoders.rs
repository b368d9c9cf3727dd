//! Image encoder, per-modality genetic encoders and projection heads.
//!
//! Weights are kept as plain tensors between steps. For a forward pass they
//! are bound into a [`Graph`], giving the same structure over [`Var`]s.

use std::path::Path;

use contig_autodiff::{AdError, BatchNorm1d, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenVariant {
    /// Features go straight to the projection head.
    None,
    /// Linear → ReLU → BatchNorm1d.
    H1,
    /// The H1 block twice.
    H12,
}

impl HiddenVariant {
    pub fn n_blocks(self) -> usize {
        match self {
            HiddenVariant::None => 0,
            HiddenVariant::H1 => 1,
            HiddenVariant::H12 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub image_input_dim: usize,
    pub genetic_input_dims: Vec<usize>,
    pub hidden_variant: HiddenVariant,
    pub hidden_width: usize,
    pub repr_dim: usize,
    pub proj_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_input_dim: 0,
            genetic_input_dims: Vec::new(),
            hidden_variant: HiddenVariant::H1,
            hidden_width: 2048,
            repr_dim: 64,
            proj_dim: 128,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.image_input_dim == 0 {
            return bad("image_input_dim must be positive");
        }
        if self.genetic_input_dims.is_empty() {
            return bad("at least one genetic modality is required");
        }
        if self.genetic_input_dims.contains(&0) {
            return bad("genetic input dimensions must be positive");
        }
        if self.repr_dim == 0 || self.proj_dim == 0 {
            return bad("repr_dim and proj_dim must be positive");
        }
        if self.hidden_variant != HiddenVariant::None && self.hidden_width == 0 {
            return bad("hidden_width must be positive");
        }
        Ok(())
    }

    pub fn n_modalities(&self) -> usize {
        self.genetic_input_dims.len()
    }

    /// Width of the genetic encoder output for modality `m`.
    pub fn genetic_output_dim(&self, m: usize) -> usize {
        match self.hidden_variant {
            HiddenVariant::None => self.genetic_input_dims[m],
            _ => self.hidden_width,
        }
    }
}

/// `y = x·W + b`, with `W` stored `in × out` and `b` as `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: T,
    pub b: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenBlock<T> {
    pub linear: Linear<T>,
    pub gamma: T,
    pub beta: T,
}

/// Linear → ReLU → Linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2<T> {
    pub l1: Linear<T>,
    pub l2: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub image: Mlp2<T>,
    pub genetic: Vec<Vec<HiddenBlock<T>>>,
    pub head_image: Mlp2<T>,
    pub head_genetic: Vec<Mlp2<T>>,
}

impl<T> Weights<T> {
    /// Every tensor with its dotted name, in a fixed canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        fn push_lin<'a, T>(out: &mut Vec<(String, &'a T)>, p: &str, l: &'a Linear<T>) {
            out.push((format!("{p}.w"), &l.w));
            out.push((format!("{p}.b"), &l.b));
        }
        fn push_mlp<'a, T>(out: &mut Vec<(String, &'a T)>, p: &str, m: &'a Mlp2<T>) {
            push_lin(out, &format!("{p}.l1"), &m.l1);
            push_lin(out, &format!("{p}.l2"), &m.l2);
        }
        push_mlp(&mut out, "image", &self.image);
        for (m, blocks) in self.genetic.iter().enumerate() {
            for (k, b) in blocks.iter().enumerate() {
                let p = format!("genetic{m}.block{k}");
                push_lin(&mut out, &format!("{p}.linear"), &b.linear);
                out.push((format!("{p}.gamma"), &b.gamma));
                out.push((format!("{p}.beta"), &b.beta));
            }
        }
        push_mlp(&mut out, "head_image", &self.head_image);
        for (m, h) in self.head_genetic.iter().enumerate() {
            push_mlp(&mut out, &format!("head_genetic{m}"), h);
        }
        out
    }

    /// Mutable references in the same order as [`Weights::named`].
    pub fn refs_mut(&mut self) -> Vec<&mut T> {
        fn lin<'a, T>(out: &mut Vec<&'a mut T>, l: &'a mut Linear<T>) {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        fn mlp<'a, T>(out: &mut Vec<&'a mut T>, m: &'a mut Mlp2<T>) {
            lin(out, &mut m.l1);
            lin(out, &mut m.l2);
        }
        let mut out = Vec::new();
        mlp(&mut out, &mut self.image);
        for blocks in &mut self.genetic {
            for b in blocks {
                lin(&mut out, &mut b.linear);
                out.push(&mut b.gamma);
                out.push(&mut b.beta);
            }
        }
        mlp(&mut out, &mut self.head_image);
        for h in &mut self.head_genetic {
            mlp(&mut out, h);
        }
        out
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Weights<U> {
        fn lin<T, U>(l: &Linear<T>, f: &mut impl FnMut(&T) -> U) -> Linear<U> {
            Linear { w: f(&l.w), b: f(&l.b) }
        }
        fn mlp<T, U>(m: &Mlp2<T>, f: &mut impl FnMut(&T) -> U) -> Mlp2<U> {
            Mlp2 {
                l1: lin(&m.l1, f),
                l2: lin(&m.l2, f),
            }
        }
        let image = mlp(&self.image, f);
        let genetic = self
            .genetic
            .iter()
            .map(|blocks| {
                blocks
                    .iter()
                    .map(|b| HiddenBlock {
                        linear: lin(&b.linear, f),
                        gamma: f(&b.gamma),
                        beta: f(&b.beta),
                    })
                    .collect()
            })
            .collect();
        let head_image = mlp(&self.head_image, f);
        let head_genetic = self.head_genetic.iter().map(|h| mlp(h, f)).collect();
        Weights {
            image,
            genetic,
            head_image,
            head_genetic,
        }
    }
}

/// Which projection head to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Image,
    Genetic(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    pub weights: Weights<Tensor>,
    /// Running statistics per genetic modality and hidden block.
    pub batchnorm: Vec<Vec<BatchNorm1d>>,
}

fn linear_init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Linear<Tensor> {
    let a = 1.0 / (fan_in as f64).sqrt();
    let mut draw = |len: usize| (0..len).map(|_| rng.random_range(-a..=a)).collect::<Vec<f64>>();
    let w = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out)).expect("shape");
    let b = Tensor::matrix(1, fan_out, draw(fan_out)).expect("shape");
    Linear { w, b }
}

fn shape_err(op: &'static str, got: &[usize], want: usize) -> CoreError {
    CoreError::Ad(AdError::Shape {
        op,
        left: got.to_vec(),
        right: vec![want],
    })
}

fn apply_linear(g: &mut Graph, l: &Linear<Var>, x: Var) -> Result<Var> {
    let y = g.matmul(x, l.w)?;
    Ok(g.add_row(y, l.b)?)
}

fn apply_mlp(g: &mut Graph, m: &Mlp2<Var>, x: Var) -> Result<Var> {
    let h = apply_linear(g, &m.l1, x)?;
    let h = g.relu(h);
    apply_linear(g, &m.l2, h)
}

impl ModelParams {
    /// Seeded initialization: weights and biases uniform in ±1/√fan_in,
    /// batchnorm scale 1 and shift 0.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, d, h) = (config.image_input_dim, config.repr_dim, config.hidden_width);
        let image = Mlp2 {
            l1: linear_init(&mut rng, p, d),
            l2: linear_init(&mut rng, d, d),
        };
        let mut genetic = Vec::new();
        let mut batchnorm = Vec::new();
        for &dim in &config.genetic_input_dims {
            let mut blocks = Vec::new();
            let mut bns = Vec::new();
            let mut fan_in = dim;
            for _ in 0..config.hidden_variant.n_blocks() {
                blocks.push(HiddenBlock {
                    linear: linear_init(&mut rng, fan_in, h),
                    gamma: Tensor::filled(&[1, h], 1.0),
                    beta: Tensor::zeros(&[1, h]),
                });
                bns.push(BatchNorm1d::new(h));
                fan_in = h;
            }
            genetic.push(blocks);
            batchnorm.push(bns);
        }
        let head = |rng: &mut ChaCha8Rng, input: usize| Mlp2 {
            l1: linear_init(rng, input, d),
            l2: linear_init(rng, d, config.proj_dim),
        };
        let head_image = head(&mut rng, d);
        let head_genetic = (0..config.n_modalities())
            .map(|m| head(&mut rng, config.genetic_output_dim(m)))
            .collect();
        Ok(Self {
            config: config.clone(),
            weights: Weights {
                image,
                genetic,
                head_image,
                head_genetic,
            },
            batchnorm,
        })
    }

    pub fn n_params(&self) -> usize {
        self.weights.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Puts every weight into `g` as a leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Weights<Var> {
        self.weights.map(&mut |t: &Tensor| g.leaf(t.clone(), trainable))
    }

    pub fn encode_image(&self, g: &mut Graph, w: &Weights<Var>, x: Var) -> Result<Var> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.config.image_input_dim {
            return Err(shape_err("encode_image", &shape, self.config.image_input_dim));
        }
        apply_mlp(g, &w.image, x)
    }

    fn check_genetic(&self, g: &Graph, m: usize, x: Var) -> Result<()> {
        if m >= self.config.n_modalities() {
            return Err(CoreError::Config(format!("no genetic modality {m}")));
        }
        let shape = g.value(x).shape();
        let want = self.config.genetic_input_dims[m];
        if shape.len() != 2 || shape[1] != want {
            return Err(shape_err("encode_genetics", shape, want));
        }
        Ok(())
    }

    /// Eval mode: batchnorm uses running statistics.
    pub fn encode_genetics(&self, g: &mut Graph, w: &Weights<Var>, m: usize, x: Var) -> Result<Var> {
        self.check_genetic(g, m, x)?;
        let mut h = x;
        for (block, bn) in w.genetic[m].iter().zip(&self.batchnorm[m]) {
            let z = apply_linear(g, &block.linear, h)?;
            let z = g.relu(z);
            h = bn.forward_eval(g, z, block.gamma, block.beta)?;
        }
        Ok(h)
    }

    /// Eval-mode genetic embedding of `x` with only modality `m`'s encoder
    /// and head placed in `g`, as constants.
    pub fn genetic_embedding_frozen(&self, g: &mut Graph, m: usize, x: Var) -> Result<Var> {
        self.check_genetic(g, m, x)?;
        let mut c = |t: &Tensor| g.constant(t.clone());
        let lin = |l: &Linear<Tensor>, c: &mut dyn FnMut(&Tensor) -> Var| Linear { w: c(&l.w), b: c(&l.b) };
        let blocks: Vec<HiddenBlock<Var>> = self.weights.genetic[m]
            .iter()
            .map(|b| HiddenBlock {
                linear: lin(&b.linear, &mut c),
                gamma: c(&b.gamma),
                beta: c(&b.beta),
            })
            .collect();
        let head = &self.weights.head_genetic[m];
        let head = Mlp2 {
            l1: lin(&head.l1, &mut c),
            l2: lin(&head.l2, &mut c),
        };
        let mut h = x;
        for (block, bn) in blocks.iter().zip(&self.batchnorm[m]) {
            let z = apply_linear(g, &block.linear, h)?;
            let z = g.relu(z);
            h = bn.forward_eval(g, z, block.gamma, block.beta)?;
        }
        apply_mlp(g, &head, h)
    }

    /// Train mode: batchnorm uses batch statistics and updates the running
    /// estimates.
    pub fn encode_genetics_train(&mut self, g: &mut Graph, w: &Weights<Var>, m: usize, x: Var) -> Result<Var> {
        self.check_genetic(g, m, x)?;
        let mut h = x;
        for (block, bn) in w.genetic[m].iter().zip(&mut self.batchnorm[m]) {
            let z = apply_linear(g, &block.linear, h)?;
            let z = g.relu(z);
            h = bn.forward(g, z, block.gamma, block.beta, true)?;
        }
        Ok(h)
    }

    pub fn project(&self, g: &mut Graph, w: &Weights<Var>, head: Head, h: Var) -> Result<Var> {
        let (mlp, want) = match head {
            Head::Image => (&w.head_image, self.config.repr_dim),
            Head::Genetic(m) => (
                w.head_genetic
                    .get(m)
                    .ok_or_else(|| CoreError::Config(format!("no genetic modality {m}")))?,
                self.config.genetic_output_dim(m),
            ),
        };
        let shape = g.value(h).shape().to_vec();
        if shape.len() != 2 || shape[1] != want {
            return Err(shape_err("project", &shape, want));
        }
        apply_mlp(g, mlp, h)
    }

    /// Image representations `h_v` (eval mode, no gradients), row-major `n × repr_dim`.
    pub fn image_representations(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let w = self.bind(&mut g, false);
        let x = g.constant(images.clone());
        let h = self.encode_image(&mut g, &w, x)?;
        Ok(g.value(h).clone())
    }

    /// Projected image embeddings `z_v` in eval mode.
    pub fn image_embeddings(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let w = self.bind(&mut g, false);
        let x = g.constant(images.clone());
        let h = self.encode_image(&mut g, &w, x)?;
        let z = self.project(&mut g, &w, Head::Image, h)?;
        Ok(g.value(z).clone())
    }

    /// Projected genetic embeddings `z_g` for modality `m` in eval mode.
    pub fn genetic_embeddings(&self, m: usize, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let w = self.bind(&mut g, false);
        let x = g.constant(x.clone());
        let h = self.encode_genetics(&mut g, &w, m, x)?;
        let z = self.project(&mut g, &w, Head::Genetic(m), h)?;
        Ok(g.value(z).clone())
    }
}

const CHECKPOINT_FORMAT: &str = "contig-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BatchNormRecord {
    name: String,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    momentum: f64,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: EncoderConfig,
    tensors: Vec<NamedTensor>,
    batchnorm: Vec<BatchNormRecord>,
}

impl ModelParams {
    /// JSON container of named arrays. 64-bit values round-trip exactly.
    pub fn to_json(&self) -> String {
        let tensors = self
            .weights
            .named()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        let batchnorm = self
            .batchnorm
            .iter()
            .enumerate()
            .flat_map(|(m, bns)| {
                bns.iter().enumerate().map(move |(k, bn)| BatchNormRecord {
                    name: format!("genetic{m}.block{k}.bn"),
                    running_mean: bn.running_mean.clone(),
                    running_var: bn.running_var.clone(),
                    momentum: bn.momentum,
                    eps: bn.eps,
                })
            })
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tensors,
            batchnorm,
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(CoreError::Checkpoint(format!(
                "unsupported container {} v{}",
                file.format, file.version
            )));
        }
        let mut params = ModelParams::init(&file.config, 0)?;
        let names: Vec<(String, Vec<usize>)> = params
            .weights
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if names.len() != file.tensors.len() {
            return Err(CoreError::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                file.tensors.len()
            )));
        }
        for ((slot, (name, shape)), saved) in params.weights.refs_mut().into_iter().zip(&names).zip(file.tensors) {
            if saved.name != *name || saved.shape != *shape {
                return Err(CoreError::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    saved.name, saved.shape
                )));
            }
            *slot = Tensor::new(saved.shape, saved.data)?;
        }
        let mut records = file.batchnorm.into_iter();
        for (m, bns) in params.batchnorm.iter_mut().enumerate() {
            for (k, bn) in bns.iter_mut().enumerate() {
                let name = format!("genetic{m}.block{k}.bn");
                let r = records
                    .next()
                    .filter(|r| r.name == name && r.running_mean.len() == bn.features() && r.running_var.len() == bn.features())
                    .ok_or_else(|| CoreError::Checkpoint(format!("missing or malformed {name}")))?;
                bn.running_mean = r.running_mean;
                bn.running_var = r.running_var;
                bn.momentum = r.momentum;
                bn.eps = r.eps;
            }
        }
        if records.next().is_some() {
            return Err(CoreError::Checkpoint("unexpected extra batchnorm records".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        contig_genetics::io::write_text(path, &self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(variant: HiddenVariant) -> EncoderConfig {
        EncoderConfig {
            image_input_dim: 5,
            genetic_input_dims: vec![3, 4],
            hidden_variant: variant,
            hidden_width: 6,
            repr_dim: 6,
            proj_dim: 4,
        }
    }

    #[test]
    fn defaults() {
        let c = EncoderConfig::default();
        assert_eq!(c.proj_dim, 128);
        assert_eq!(c.hidden_width, 2048);
    }

    #[test]
    fn variant_none_is_identity() {
        let p = ModelParams::init(&cfg(HiddenVariant::None), 1).unwrap();
        let mut g = Graph::new();
        let w = p.bind(&mut g, true);
        let x = g.constant(Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.0, -1.0]]).unwrap());
        let h = p.encode_genetics(&mut g, &w, 0, x).unwrap();
        assert_eq!(h, x);
        assert!(p.weights.genetic.iter().all(Vec::is_empty));
    }

    #[test]
    fn h12_parameter_count() {
        let c = cfg(HiddenVariant::H12);
        let p = ModelParams::init(&c, 1).unwrap();
        let (pi, d, h, q) = (5, 6, 6, 4);
        let image = pi * d + d + d * d + d;
        let block = |i: usize| i * h + h + 2 * h;
        let genetic: usize = [3, 4].iter().map(|&i| block(i) + block(h)).sum();
        let head = |i: usize| i * d + d + d * q + q;
        let heads = head(d) + 2 * head(h);
        assert_eq!(p.n_params(), image + genetic + heads);
    }

    #[test]
    fn h1_zeroes_negatives_before_normalizing() {
        // 2×2 case: W = I, b = 0, so the block sees relu(x) then batch statistics.
        let c = EncoderConfig {
            image_input_dim: 1,
            genetic_input_dims: vec![2],
            hidden_variant: HiddenVariant::H1,
            hidden_width: 2,
            repr_dim: 2,
            proj_dim: 2,
        };
        let mut p = ModelParams::init(&c, 1).unwrap();
        p.weights.genetic[0][0].linear.w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        p.weights.genetic[0][0].linear.b = Tensor::zeros(&[1, 2]);
        let mut g = Graph::new();
        let w = p.bind(&mut g, false);
        let x = g.constant(Tensor::from_rows(&[vec![-1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let h = p.encode_genetics_train(&mut g, &w, 0, x).unwrap();
        // column 0: relu → (0, 3), mean 1.5, biased var 2.25
        // column 1: (2, 4), mean 3, biased var 1
        let s0 = (2.25f64 + 1e-5).sqrt();
        let s1 = (1.0f64 + 1e-5).sqrt();
        let want = [-1.5 / s0, -1.0 / s1, 1.5 / s0, 1.0 / s1];
        for (a, b) in g.value(h).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        // running stats moved towards the unbiased batch variance
        assert!((p.batchnorm[0][0].running_mean[0] - 0.15).abs() < 1e-12);
        assert!((p.batchnorm[0][0].running_var[0] - (0.9 + 0.1 * 4.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut p = ModelParams::init(&cfg(HiddenVariant::H1), 3).unwrap();
        for t in p.weights.refs_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let out = p
            .image_representations(&Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]).unwrap())
            .unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_head_is_relu() {
        let c = EncoderConfig {
            image_input_dim: 3,
            genetic_input_dims: vec![3],
            hidden_variant: HiddenVariant::None,
            hidden_width: 3,
            repr_dim: 3,
            proj_dim: 3,
        };
        let mut p = ModelParams::init(&c, 1).unwrap();
        let eye = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let head = &mut p.weights.head_genetic[0];
        head.l1 = Linear {
            w: eye.clone(),
            b: Tensor::zeros(&[1, 3]),
        };
        head.l2 = Linear {
            w: eye,
            b: Tensor::zeros(&[1, 3]),
        };
        let z = p
            .genetic_embeddings(0, &Tensor::from_rows(&[vec![-1.0, 0.5, 2.0]]).unwrap())
            .unwrap();
        assert_eq!(z.data(), &[0.0, 0.5, 2.0]);
    }

    #[test]
    fn width_mismatch_is_a_shape_error() {
        let p = ModelParams::init(&cfg(HiddenVariant::H1), 1).unwrap();
        let err = p.image_embeddings(&Tensor::zeros(&[2, 4])).unwrap_err();
        assert!(matches!(err, CoreError::Ad(AdError::Shape { .. })));
        assert!(p.genetic_embeddings(1, &Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut p = ModelParams::init(&cfg(HiddenVariant::H12), 9).unwrap();
        p.batchnorm[1][0].running_mean[2] = 0.1 + 0.2;
        p.batchnorm[0][1].running_var[0] = std::f64::consts::PI / 7.0;
        let q = ModelParams::from_json(&p.to_json()).unwrap();
        assert_eq!(p, q);
        for ((_, a), (_, b)) in p.weights.named().iter().zip(q.weights.named()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn corrupted_checkpoint_is_rejected() {
        let p = ModelParams::init(&cfg(HiddenVariant::H1), 9).unwrap();
        let text = p.to_json().replace("\"image.l1.w\"", "\"image.lx.w\"");
        assert!(matches!(ModelParams::from_json(&text), Err(CoreError::Checkpoint(_))));
    }
}
