//! Pretraining loop, optimizer, learning-rate schedule and frozen-encoder
//! evaluation.

use std::fmt::Write as _;

use contig_autodiff::{Graph, Tensor, Var};
use contig_genetics::io::{fmt_f64, Provenance};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{aggregation_schemes, multimodal_loss, AggregationScheme, DenominatorMode, LossConfig, ModalityBatch};
use crate::dataset::Dataset;
use crate::encoders::{EncoderConfig, Head, ModelParams};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Apply weight decay directly to the parameters instead of adding it to
    /// the gradient.
    pub decoupled_weight_decay: bool,
    pub epochs: usize,
    pub tau: f64,
    pub lambda: f64,
    pub denominator: DenominatorMode,
    /// Name of a registered aggregation scheme.
    pub scheme: String,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 1e-6,
            decoupled_weight_decay: false,
            epochs: 20,
            tau: 0.1,
            lambda: 0.75,
            denominator: DenominatorMode::Standard,
            scheme: "outer".into(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            tau: self.tau,
            lambda: self.lambda,
            denominator: self.denominator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(CoreError::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if self.epochs == 0 {
            return Err(CoreError::Config("epochs must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(CoreError::Config("lr and weight_decay must be non-negative".into()));
        }
        aggregation_schemes().create(&self.scheme)?;
        self.loss().validate()
    }
}

/// `0.5·lr0·(1 + cos(π·step/total))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected update. With `decoupled` false the decay term
    /// `weight_decay·θ` is added to the gradient.
    pub fn update(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[&[f64]],
        lr: f64,
        weight_decay: f64,
        decoupled: bool,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CoreError::Data(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != self.m[k].len() || g.len() != self.m[k].len() {
                return Err(CoreError::Data(format!("tensor {k}: parameter, gradient and moment sizes differ")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, theta) in p.data_mut().iter_mut().enumerate() {
                let mut g = grads[k][i];
                if !decoupled {
                    g += weight_decay * *theta;
                }
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                if decoupled {
                    *theta -= lr * weight_decay * *theta;
                }
                *theta -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Shuffled batches covering every row exactly once. A trailing batch of a
/// single row is merged into the one before it.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub terms: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

impl TrainOutput {
    pub fn epoch_means(&self) -> Vec<f64> {
        let epochs = self.trace.last().map_or(0, |r| r.epoch + 1);
        (0..epochs)
            .map(|e| {
                let rows: Vec<f64> = self.trace.iter().filter(|r| r.epoch == e).map(|r| r.loss).collect();
                rows.iter().sum::<f64>() / rows.len() as f64
            })
            .collect()
    }
}

/// Takes input dimensions from the data, everything else from `base`.
pub fn encoder_config_for(data: &Dataset, base: &EncoderConfig) -> EncoderConfig {
    EncoderConfig {
        image_input_dim: data.image_dim,
        genetic_input_dims: data.genetic_dims(),
        ..base.clone()
    }
}

/// Spreads `compact` (one row per entry of `rows`) back over a `b`-row
/// batch; rows not listed get a constant filler that the loss never reads.
fn expand_rows(g: &mut Graph, compact: Var, rows: &[usize], b: usize) -> Result<Var> {
    let k = rows.len();
    if k == b {
        return Ok(compact);
    }
    let p = g.value(compact).cols();
    let filler = g.constant(Tensor::filled(&[1, p], 1.0));
    let stacked = g.concat_rows(&[compact, filler])?;
    let mut idx = vec![k; b];
    for (pos, &r) in rows.iter().enumerate() {
        idx[r] = pos;
    }
    Ok(g.select_rows(stacked, &idx)?)
}

struct StepResult {
    loss: f64,
    terms: Vec<Option<f64>>,
    grads: Vec<Vec<f64>>,
    warnings: Vec<String>,
}

fn train_step(
    params: &mut ModelParams,
    data: &Dataset,
    batch: &[usize],
    loss_cfg: &LossConfig,
    scheme: &dyn AggregationScheme,
) -> Result<StepResult> {
    let b = batch.len();
    let mut g = Graph::new();
    let w = params.bind(&mut g, true);
    let xv = g.constant(data.images_tensor(batch));
    let hv = params.encode_image(&mut g, &w, xv)?;
    let zv = params.project(&mut g, &w, Head::Image, hv)?;
    let present: Vec<Vec<bool>> = data
        .modalities
        .iter()
        .map(|md| batch.iter().map(|&i| md.present[i]).collect())
        .collect();
    let mut z_g = Vec::with_capacity(present.len());
    for m in 0..present.len() {
        let rows = scheme.term_rows(&present, m);
        if rows.len() < 2 {
            // the term is skipped by the loss; any finite placeholder will do
            z_g.push(g.constant(Tensor::filled(&[b, params.config.proj_dim], 1.0)));
            continue;
        }
        let ids: Vec<usize> = rows.iter().map(|&r| batch[r]).collect();
        let x = g.constant(data.genetic_tensor(m, &ids));
        let h = params.encode_genetics_train(&mut g, &w, m, x)?;
        let z = params.project(&mut g, &w, Head::Genetic(m), h)?;
        z_g.push(expand_rows(&mut g, z, &rows, b)?);
    }
    let out = multimodal_loss(&mut g, &ModalityBatch { z_v: zv, z_g, present }, loss_cfg, scheme)?;
    let loss = g.value(out.loss).item();
    let terms = out.terms.iter().map(|t| t.map(|v| g.value(v).item())).collect();
    let warnings = out.warnings();
    if loss.is_finite() {
        g.backward(out.loss)?;
    }
    let grads = w
        .named()
        .into_iter()
        .map(|(_, &v)| match g.grad(v) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; g.value(v).numel()],
        })
        .collect();
    Ok(StepResult {
        loss,
        terms,
        grads,
        warnings,
    })
}

/// Contrastive pretraining of all encoders and heads.
///
/// Initialization uses `cfg.seed`; batch order uses a separate stream of the
/// same seed. Identical inputs give bit-identical traces and parameters.
pub fn pretrain(data: &Dataset, enc: &EncoderConfig, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(CoreError::Data(format!("need at least 2 individuals, got {}", data.len())));
    }
    let enc = encoder_config_for(data, enc);
    let mut params = ModelParams::init(&enc, cfg.seed)?;
    let scheme = aggregation_schemes().create(&cfg.scheme)?;
    let loss_cfg = cfg.loss();
    let sizes: Vec<usize> = params.weights.named().iter().map(|(_, t)| t.numel()).collect();
    let mut adam = Adam::new(&sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let per_epoch = epoch_batches(data.len(), cfg.batch_size, &mut rng.clone()).len();
    let total = per_epoch * cfg.epochs;
    let mut trace = Vec::with_capacity(total);
    let mut warnings = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for batch in epoch_batches(data.len(), cfg.batch_size, &mut rng) {
            let lr = cosine_lr(step, total, cfg.lr);
            let r = train_step(&mut params, data, &batch, &loss_cfg, scheme.as_ref())?;
            if !r.loss.is_finite() {
                return Err(CoreError::NonFiniteLoss {
                    value: r.loss,
                    step,
                    epoch,
                    lr,
                    batch_ids: batch.iter().map(|&i| data.ids[i].clone()).collect(),
                });
            }
            warnings.extend(r.warnings.into_iter().map(|w| format!("step {step}: {w}")));
            let grads: Vec<&[f64]> = r.grads.iter().map(Vec::as_slice).collect();
            let mut refs = params.weights.refs_mut();
            adam.update(&mut refs, &grads, lr, cfg.weight_decay, cfg.decoupled_weight_decay)?;
            trace.push(TraceRow {
                step,
                epoch,
                lr,
                loss: r.loss,
                terms: r.terms,
            });
            step += 1;
        }
    }
    Ok(TrainOutput { params, trace, warnings })
}

/// `step epoch lr loss loss_<modality>...`; skipped terms are `NA`.
pub fn trace_tsv(trace: &[TraceRow], modality_names: &[String], prov: &Provenance) -> String {
    let mut out = prov.line();
    out.push_str("step\tepoch\tlr\tloss");
    for name in modality_names {
        let _ = write!(out, "\tloss_{name}");
    }
    out.push('\n');
    for r in trace {
        let _ = write!(out, "{}\t{}\t{}\t{}", r.step, r.epoch, fmt_f64(r.lr), fmt_f64(r.loss));
        for t in &r.terms {
            out.push('\t');
            out.push_str(&t.map_or("NA".to_string(), fmt_f64));
        }
        out.push('\n');
    }
    out
}

/// Fraction of rows whose image embedding is closest (cosine) to its own
/// genetic embedding of modality `m` among the given rows.
pub fn retrieval_top1(params: &ModelParams, data: &Dataset, m: usize, rows: &[usize]) -> Result<f64> {
    if rows.iter().any(|&i| !data.modalities[m].present[i]) {
        return Err(CoreError::Data("retrieval rows must all have the modality".into()));
    }
    if rows.is_empty() {
        return Err(CoreError::Data("no rows for retrieval".into()));
    }
    let zv = params.image_embeddings(&data.images_tensor(rows))?;
    let zg = params.genetic_embeddings(m, &data.genetic_tensor(m, rows))?;
    let mut g = Graph::new();
    let (a, b) = (g.constant(zv), g.constant(zg));
    let s = g.cosine_similarity(a, b)?;
    let s = g.value(s);
    let hits = (0..rows.len())
        .filter(|&j| {
            let row = s.row(j);
            let best = (0..row.len()).fold(0, |bi, k| if row[k] > row[bi] { k } else { bi });
            best == j
        })
        .count();
    Ok(hits as f64 / rows.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearTask {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEvalReport {
    pub task: LinearTask,
    pub n_train: usize,
    pub n_test: usize,
    pub mse: Option<f64>,
    pub r2: Option<f64>,
    pub auc: Option<f64>,
}

fn with_intercept(x: &Tensor) -> DMatrix<f64> {
    let (n, d) = (x.rows(), x.cols());
    DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) })
}

/// Ordinary least squares with intercept, via SVD.
fn fit_least_squares(x: &Tensor, y: &[f64]) -> Result<DVector<f64>> {
    let a = with_intercept(x);
    let dims = a.nrows().max(a.ncols()) as f64;
    let svd = a.svd(true, true);
    let tol = svd.singular_values.max() * dims * f64::EPSILON;
    svd.solve(&DVector::from_column_slice(y), tol)
        .map_err(|e| CoreError::Data(format!("least squares failed: {e}")))
}

/// Mann–Whitney AUC with average ranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(CoreError::Data("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..scores.len()).filter(|&k| labels[k]).map(|k| ranks[k]).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// L2-regularized logistic regression by full-batch gradient descent on
/// standardized features.
fn fit_logistic(x: &Tensor, y: &[bool]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            let v = (0..n).map(|i| (x.get(i, j) - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if v > 1e-24 { v.sqrt() } else { 1.0 }
        })
        .collect();
    let z = |i: usize, j: usize| (x.get(i, j) - mean[j]) / sd[j];
    let mut w = vec![0.0; d + 1];
    let (lr, l2) = (0.5, 1e-4);
    for _ in 0..500 {
        let mut grad = vec![0.0; d + 1];
        for i in 0..n {
            let t = w[0] + (0..d).map(|j| w[j + 1] * z(i, j)).sum::<f64>();
            let p = 1.0 / (1.0 + (-t).exp());
            let e = p - if y[i] { 1.0 } else { 0.0 };
            grad[0] += e;
            for j in 0..d {
                grad[j + 1] += e * z(i, j);
            }
        }
        for j in 0..=d {
            let reg = if j == 0 { 0.0 } else { l2 * w[j] };
            w[j] -= lr * (grad[j] / n as f64 + reg);
        }
    }
    (w, mean, sd)
}

/// Fits a linear predictor on frozen image representations of the training
/// rows and scores it on the test rows.
pub fn linear_eval(
    params: &ModelParams,
    train_images: &Tensor,
    y_train: &[f64],
    test_images: &Tensor,
    y_test: &[f64],
    task: LinearTask,
) -> Result<LinearEvalReport> {
    if y_train.len() != train_images.rows() || y_test.len() != test_images.rows() {
        return Err(CoreError::Data("labels are not aligned with individuals".into()));
    }
    let htr = params.image_representations(train_images)?;
    let hte = params.image_representations(test_images)?;
    linear_eval_features(&htr, y_train, &hte, y_test, task)
}

/// [`linear_eval`] on precomputed features.
pub fn linear_eval_features(
    x_train: &Tensor,
    y_train: &[f64],
    x_test: &Tensor,
    y_test: &[f64],
    task: LinearTask,
) -> Result<LinearEvalReport> {
    if y_train.len() != x_train.rows() || y_test.len() != x_test.rows() || y_test.is_empty() {
        return Err(CoreError::Data("labels are not aligned with individuals".into()));
    }
    let mut report = LinearEvalReport {
        task,
        n_train: y_train.len(),
        n_test: y_test.len(),
        mse: None,
        r2: None,
        auc: None,
    };
    match task {
        LinearTask::Regression => {
            let beta = fit_least_squares(x_train, y_train)?;
            let pred = with_intercept(x_test) * beta;
            let n = y_test.len() as f64;
            let sse: f64 = y_test.iter().zip(pred.iter()).map(|(y, p)| (y - p).powi(2)).sum();
            let mean = y_test.iter().sum::<f64>() / n;
            let sst: f64 = y_test.iter().map(|y| (y - mean).powi(2)).sum();
            report.mse = Some(sse / n);
            report.r2 = Some(if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN });
        }
        LinearTask::Classification => {
            let as_bool = |ys: &[f64]| -> Result<Vec<bool>> {
                ys.iter()
                    .map(|&v| match v {
                        v if v == 0.0 => Ok(false),
                        v if v == 1.0 => Ok(true),
                        other => Err(CoreError::Data(format!("class label {other} is not 0 or 1"))),
                    })
                    .collect()
            };
            let ytr = as_bool(y_train)?;
            let yte = as_bool(y_test)?;
            if ytr.iter().all(|&v| v) || ytr.iter().all(|&v| !v) {
                return Err(CoreError::Data("training labels contain a single class".into()));
            }
            let (w, mean, sd) = fit_logistic(x_train, &ytr);
            let d = x_test.cols();
            let scores: Vec<f64> = (0..x_test.rows())
                .map(|i| w[0] + (0..d).map(|j| w[j + 1] * (x_test.get(i, j) - mean[j]) / sd[j]).sum::<f64>())
                .collect();
            report.auc = Some(auc(&scores, &yte)?);
        }
    }
    Ok(report)
}
