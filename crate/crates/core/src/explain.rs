//! Attribution of the contrastive loss to genetic input features.
//!
//! The explained quantity `E(x)` is the multimodal loss of a fixed reference
//! batch with one extra individual `x` appended. Reference embeddings and
//! the image of `x` are held constant, so only `x`'s genetic features vary.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use contig_autodiff::{Graph, Tensor, Var};
use contig_genetics::io::{fmt_f64, short_hash, Provenance};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::{DenominatorMode, LossConfig};
#[cfg(test)]
use crate::contrastive::{multimodal_loss, ModalityBatch, Outer};
use crate::dataset::Dataset;
#[cfg(test)]
use crate::encoders::Head;
use crate::encoders::ModelParams;
use crate::error::{CoreError, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub reference_batch_size: usize,
    pub ig_steps: usize,
    /// Name of a registered baseline.
    pub baseline: String,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            reference_batch_size: 128,
            ig_steps: 128,
            baseline: "zeros".into(),
        }
    }
}

impl ExplainerConfig {
    /// Full-scale reference size; the default above is for desk runs.
    pub const FULL_SCALE_REFERENCE: usize = 1000;

    pub fn validate(&self) -> Result<()> {
        if self.reference_batch_size < 1 {
            return Err(CoreError::Config("reference_batch_size must be at least 1".into()));
        }
        if self.ig_steps < 2 {
            return Err(CoreError::Config(format!("ig_steps must be at least 2, got {}", self.ig_steps)));
        }
        baselines().create(&self.baseline)?;
        Ok(())
    }
}

/// One individual to explain. `genetics[m]` is `None` when modality `m` is
/// missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Vec<f64>,
    pub genetics: Vec<Option<Vec<f64>>>,
}

impl Dataset {
    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            id: self.ids[i].clone(),
            image: self.image_row(i).to_vec(),
            genetics: self
                .modalities
                .iter()
                .map(|md| md.present[i].then(|| md.row(i).to_vec()))
                .collect(),
        }
    }
}

/// Precomputed, constant embeddings of the reference individuals.
#[derive(Debug, Clone)]
pub struct Reference {
    pub ids: Vec<String>,
    pub z_v: Tensor,
    /// Rows of absent individuals hold a constant filler.
    pub z_g: Vec<Tensor>,
    pub present: Vec<Vec<bool>>,
    /// Per-modality feature means over the reference members that have it.
    pub feature_means: Vec<Vec<f64>>,
    pub loss: LossConfig,
    pub fingerprint: String,
    terms: Vec<RefTerm>,
}

/// Parts of one modality's loss term that do not depend on the explained
/// individual.
#[derive(Debug, Clone)]
struct RefTerm {
    zv: Tensor,
    zg: Tensor,
    /// Row log-sum-exp of the reference-only logits, image→genetics and
    /// genetics→image.
    lse_vg: Vec<f64>,
    lse_gv: Vec<f64>,
    diag_sum: f64,
    /// The term on the reference alone; `None` when it has under two rows.
    alone: Option<f64>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn logsumexp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.map(|x| (x - mx).exp()).sum::<f64>().ln()
}

impl RefTerm {
    fn new(zv: Tensor, zg: Tensor, loss: &LossConfig) -> Self {
        let n = zv.rows();
        let exclude = loss.denominator == DenominatorMode::ExcludePositive;
        let s: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|k| cosine(zv.row(j), zg.row(k)) / loss.tau).collect())
            .collect();
        let keep = |j: usize, k: usize| !(exclude && j == k);
        let lse_vg: Vec<f64> = (0..n)
            .map(|j| logsumexp((0..n).filter(move |&k| keep(j, k)).map(|k| s[j][k])))
            .collect();
        let lse_gv: Vec<f64> = (0..n)
            .map(|j| logsumexp((0..n).filter(move |&k| keep(j, k)).map(|k| s[k][j])))
            .collect();
        let diag_sum: f64 = (0..n).map(|j| s[j][j]).sum();
        let alone = (n >= 2).then(|| {
            let l_vg: f64 = lse_vg.iter().sum::<f64>() - diag_sum;
            let l_gv: f64 = lse_gv.iter().sum::<f64>() - diag_sum;
            loss.lambda * l_vg + (1.0 - loss.lambda) * l_gv
        });
        Self {
            zv,
            zg,
            lse_vg,
            lse_gv,
            diag_sum,
            alone,
        }
    }
}

impl Reference {
    pub fn new(params: &ModelParams, data: &Dataset, rows: &[usize], loss: &LossConfig) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::Data("reference batch is empty".into()));
        }
        loss.validate()?;
        let p = params.config.proj_dim;
        let z_v = params.image_embeddings(&data.images_tensor(rows))?;
        let mut z_g = Vec::new();
        let mut present: Vec<Vec<bool>> = Vec::new();
        let mut feature_means = Vec::new();
        for (m, md) in data.modalities.iter().enumerate() {
            let have: Vec<usize> = rows.iter().copied().filter(|&i| md.present[i]).collect();
            let mut full = Tensor::filled(&[rows.len(), p], 1.0);
            let mut means = vec![0.0; md.dim()];
            if !have.is_empty() {
                let z = params.genetic_embeddings(m, &data.genetic_tensor(m, &have))?;
                let mut k = 0;
                for (r, &i) in rows.iter().enumerate() {
                    if md.present[i] {
                        full.data_mut()[r * p..(r + 1) * p].copy_from_slice(z.row(k));
                        k += 1;
                    }
                }
                for &i in &have {
                    for (acc, v) in means.iter_mut().zip(md.row(i)) {
                        *acc += v / have.len() as f64;
                    }
                }
            }
            z_g.push(full);
            present.push(rows.iter().map(|&i| md.present[i]).collect());
            feature_means.push(means);
        }
        let ids: Vec<String> = rows.iter().map(|&i| data.ids[i].clone()).collect();
        let mut bytes = Vec::new();
        for id in &ids {
            bytes.extend_from_slice(id.as_bytes());
            bytes.push(0);
        }
        for t in std::iter::once(&z_v).chain(&z_g) {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        for mask in &present {
            bytes.extend(mask.iter().map(|&b| b as u8));
        }
        let fingerprint = short_hash(&bytes);
        let mut terms = Vec::new();
        for (m, mask) in present.iter().enumerate() {
            let have: Vec<usize> = (0..rows.len()).filter(|&r| mask[r]).collect();
            terms.push(RefTerm::new(z_v.select_rows(&have), z_g[m].select_rows(&have), loss));
        }
        Ok(Self {
            terms,
            ids,
            z_v,
            z_g,
            present,
            feature_means,
            loss: loss.clone(),
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[cfg(test)]
fn append_row(t: &Tensor, row: &[f64]) -> Tensor {
    let mut data = t.data().to_vec();
    data.extend_from_slice(row);
    Tensor::matrix(t.rows() + 1, t.cols(), data).expect("shape")
}

fn check_modalities(r: &Reference, features: &[Option<Vec<f64>>]) -> Result<()> {
    if features.len() != r.z_g.len() {
        return Err(CoreError::Data(format!(
            "sample has {} genetic modalities, reference has {}",
            features.len(),
            r.z_g.len()
        )));
    }
    Ok(())
}

/// `E` and its gradient with respect to each present genetic input.
///
/// Only the row and column of the appended individual change with `x`, so
/// the reference-only logits come from [`RefTerm`] and the graph holds just
/// `x`'s encoder pass and its similarities to the reference.
fn explainer_with_grad(
    params: &ModelParams,
    r: &Reference,
    zv_x: &[f64],
    features: &[Option<Vec<f64>>],
) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
    check_modalities(r, features)?;
    let loss = &r.loss;
    let exclude = loss.denominator == DenominatorMode::ExcludePositive;
    let inv_tau = 1.0 / loss.tau;
    let mut g = Graph::new();
    let mut constant = 0.0;
    let mut any_term = false;
    let mut varying: Option<Var> = None;
    let mut inputs: Vec<Option<Var>> = Vec::new();
    for (m, feat) in features.iter().enumerate() {
        let t = &r.terms[m];
        let n_ref = t.zv.rows();
        let Some(x) = feat else {
            if let Some(a) = t.alone {
                constant += a;
                any_term = true;
            }
            inputs.push(None);
            continue;
        };
        let leaf = g.leaf(Tensor::matrix(1, x.len(), x.clone())?, true);
        inputs.push(Some(leaf));
        if n_ref == 0 {
            // x alone: fewer than two rows, the term is skipped
            continue;
        }
        any_term = true;
        // constants that involve x's image embedding
        let c_x: Vec<f64> = (0..n_ref).map(|k| cosine(zv_x, t.zg.row(k)) * inv_tau).collect();
        let gv_ref: f64 = (0..n_ref)
            .map(|j| {
                let e = cosine(t.zg.row(j), zv_x) * inv_tau;
                logsumexp([t.lse_gv[j], e].into_iter())
            })
            .sum::<f64>()
            - t.diag_sum;
        let mut vg_const = -t.diag_sum;
        if exclude {
            vg_const += logsumexp(c_x.iter().copied());
        }

        let z = params.genetic_embedding_frozen(&mut g, m, leaf)?;
        let zv_ref = g.constant(t.zv.clone());
        let a = g.cosine_similarity(zv_ref, z)?;
        let a = g.scale(a, inv_tau);
        let vx = g.constant(Tensor::matrix(1, zv_x.len(), zv_x.to_vec())?);
        let d = g.cosine_similarity(vx, z)?;
        let d_mat = g.scale(d, inv_tau);
        let d = g.sum(d_mat);

        // image→genetics: reference rows gain column x, row x is new
        let lse_ref = g.constant(Tensor::matrix(n_ref, 1, t.lse_vg.clone())?);
        let rows_ref = g.concat_cols(&[lse_ref, a])?;
        let rows_ref = g.logsumexp_rows(rows_ref, false)?;
        let mut l_vg = g.sum(rows_ref);
        if !exclude {
            let cx = g.constant(Tensor::matrix(1, n_ref, c_x)?);
            let row_x = g.concat_cols(&[cx, d_mat])?;
            let row_x = g.logsumexp_rows(row_x, false)?;
            let row_x = g.sum(row_x);
            l_vg = g.add(l_vg, row_x)?;
        }
        l_vg = g.sub(l_vg, d)?;

        // genetics→image: reference rows are constant, row x is new
        let a_row = g.transpose(a)?;
        let row_x = if exclude {
            a_row
        } else {
            g.concat_cols(&[a_row, d_mat])?
        };
        let row_x = g.logsumexp_rows(row_x, false)?;
        let row_x = g.sum(row_x);
        let l_gv = g.sub(row_x, d)?;

        let l_vg = g.scale(l_vg, loss.lambda);
        let l_gv = g.scale(l_gv, 1.0 - loss.lambda);
        let term = g.add(l_vg, l_gv)?;
        constant += loss.lambda * vg_const + (1.0 - loss.lambda) * gv_ref;
        varying = Some(match varying {
            None => term,
            Some(v) => g.add(v, term)?,
        });
    }
    if !any_term {
        return Err(CoreError::EmptyLoss);
    }
    let Some(out) = varying else {
        let grads = features.iter().map(|f| f.as_ref().map(|x| vec![0.0; x.len()])).collect();
        return Ok((constant, grads));
    };
    let value = g.value(out).item() + constant;
    g.backward(out)?;
    let grads = inputs
        .iter()
        .map(|leaf| {
            leaf.map(|v| match g.grad(v) {
                Some(t) => t.data().to_vec(),
                None => vec![0.0; g.value(v).numel()],
            })
        })
        .collect();
    Ok((value, grads))
}

/// `E` computed directly on the full `reference ∪ {x}` batch.
#[cfg(test)]
fn explainer_union_batch(
    params: &ModelParams,
    r: &Reference,
    zv_x: &[f64],
    features: &[Option<Vec<f64>>],
) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
    check_modalities(r, features)?;
    let mut g = Graph::new();
    let w = params.bind(&mut g, false);
    let z_v = g.constant(append_row(&r.z_v, zv_x));
    let mut z_g = Vec::new();
    let mut present = Vec::new();
    let mut inputs: Vec<Option<Var>> = Vec::new();
    for (m, feat) in features.iter().enumerate() {
        let mut mask = r.present[m].clone();
        match feat {
            Some(x) => {
                let leaf = g.leaf(Tensor::matrix(1, x.len(), x.clone())?, true);
                let h = params.encode_genetics(&mut g, &w, m, leaf)?;
                let z = params.project(&mut g, &w, Head::Genetic(m), h)?;
                let refz = g.constant(r.z_g[m].clone());
                z_g.push(g.concat_rows(&[refz, z])?);
                mask.push(true);
                inputs.push(Some(leaf));
            }
            None => {
                let filler = vec![1.0; r.z_g[m].cols()];
                z_g.push(g.constant(append_row(&r.z_g[m], &filler)));
                mask.push(false);
                inputs.push(None);
            }
        }
        present.push(mask);
    }
    let out = multimodal_loss(&mut g, &ModalityBatch { z_v, z_g, present }, &r.loss, &Outer)?;
    let value = g.value(out.loss).item();
    g.backward(out.loss)?;
    let grads = inputs
        .iter()
        .map(|leaf| {
            leaf.map(|v| match g.grad(v) {
                Some(t) => t.data().to_vec(),
                None => vec![0.0; g.value(v).numel()],
            })
        })
        .collect();
    Ok((value, grads))
}

fn image_embedding(params: &ModelParams, x: &Sample) -> Result<Vec<f64>> {
    let t = Tensor::matrix(1, x.image.len(), x.image.clone())?;
    Ok(params.image_embeddings(&t)?.into_data())
}

/// `E(x)`: the loss of `reference ∪ {x}` under outer aggregation.
pub fn explainer_value(x: &Sample, r: &Reference, params: &ModelParams) -> Result<f64> {
    if r.is_empty() {
        return Err(CoreError::Data("reference batch is empty".into()));
    }
    let zv = image_embedding(params, x)?;
    Ok(explainer_with_grad(params, r, &zv, &x.genetics)?.0)
}

/// Gradient of `E` with respect to `x`'s genetic features.
pub fn explainer_gradient(x: &Sample, r: &Reference, params: &ModelParams) -> Result<Vec<Option<Vec<f64>>>> {
    let zv = image_embedding(params, x)?;
    Ok(explainer_with_grad(params, r, &zv, &x.genetics)?.1)
}

/// Right-Riemann integrated gradients along the straight path from
/// `baseline` to `x`: `(x_j − x'_j)·(1/m)·Σ_{t=1..m} ∂f(x' + (t/m)(x − x'))/∂x_j`.
pub fn integrated_gradients_fn(
    x: &[f64],
    baseline: &[f64],
    steps: usize,
    mut grad: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    if x.len() != baseline.len() {
        return Err(CoreError::Data("input and baseline lengths differ".into()));
    }
    let mut acc = vec![0.0; x.len()];
    for t in 1..=steps {
        let a = t as f64 / steps as f64;
        let point: Vec<f64> = x.iter().zip(baseline).map(|(xi, bi)| bi + a * (xi - bi)).collect();
        for (s, g) in acc.iter_mut().zip(grad(&point)?) {
            *s += g;
        }
    }
    Ok(acc
        .iter()
        .zip(x.iter().zip(baseline))
        .map(|(s, (xi, bi))| (xi - bi) * s / steps as f64)
        .collect())
}

/// Chooses the IG starting point for one modality of one individual.
pub trait Baseline: Send + Sync {
    fn name(&self) -> &'static str;
    fn baseline(&self, m: usize, x: &[f64], r: &Reference) -> Vec<f64>;
}

pub struct Zeros;

impl Baseline for Zeros {
    fn name(&self) -> &'static str {
        "zeros"
    }

    fn baseline(&self, _m: usize, x: &[f64], _r: &Reference) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}

pub struct ReferenceMean;

impl Baseline for ReferenceMean {
    fn name(&self) -> &'static str {
        "reference-mean"
    }

    fn baseline(&self, m: usize, _x: &[f64], r: &Reference) -> Vec<f64> {
        r.feature_means[m].clone()
    }
}

pub fn baselines() -> Registry<dyn Baseline> {
    let mut r: Registry<dyn Baseline> = Registry::new("IG baseline");
    r.register("zeros", || Box::new(Zeros))
        .register("reference-mean", || Box::new(ReferenceMean));
    r
}

/// Baseline features for every present modality of `x`.
pub fn baseline_for(x: &Sample, r: &Reference, baseline: &dyn Baseline) -> Vec<Option<Vec<f64>>> {
    x.genetics
        .iter()
        .enumerate()
        .map(|(m, f)| f.as_ref().map(|f| baseline.baseline(m, f, r)))
        .collect()
}

/// Signed attributions per genetic feature; modalities missing in `x` give
/// `None`. All present modalities move along the path together, the image
/// stays fixed.
pub fn integrated_gradients(
    x: &Sample,
    baseline: &[Option<Vec<f64>>],
    r: &Reference,
    params: &ModelParams,
    steps: usize,
) -> Result<Vec<Option<Vec<f64>>>> {
    if steps < 1 {
        return Err(CoreError::Config("ig_steps must be positive".into()));
    }
    if baseline.len() != x.genetics.len() {
        return Err(CoreError::Data("baseline does not match the sample's modalities".into()));
    }
    // flatten present modalities into one vector
    let mut layout = Vec::new();
    let mut xs = Vec::new();
    let mut bs = Vec::new();
    for (m, (f, b)) in x.genetics.iter().zip(baseline).enumerate() {
        match (f, b) {
            (Some(f), Some(b)) if f.len() == b.len() => {
                layout.push((m, xs.len(), f.len()));
                xs.extend_from_slice(f);
                bs.extend_from_slice(b);
            }
            (None, None) => {}
            _ => return Err(CoreError::Data(format!("baseline shape differs from sample in modality {m}"))),
        }
    }
    let zv = image_embedding(params, x)?;
    let unflatten = |flat: &[f64]| -> Vec<Option<Vec<f64>>> {
        let mut out: Vec<Option<Vec<f64>>> = vec![None; x.genetics.len()];
        for &(m, off, len) in &layout {
            out[m] = Some(flat[off..off + len].to_vec());
        }
        out
    };
    let ig = integrated_gradients_fn(&xs, &bs, steps, |point| {
        let (_, grads) = explainer_with_grad(params, r, &zv, &unflatten(point))?;
        let mut flat = vec![0.0; point.len()];
        for &(m, off, len) in &layout {
            flat[off..off + len].copy_from_slice(grads[m].as_ref().expect("present modality"));
        }
        Ok(flat)
    })?;
    Ok(unflatten(&ig))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub modality: String,
    pub feature_ids: Vec<String>,
    /// Signed attributions keyed by individual id.
    pub local: BTreeMap<String, Vec<f64>>,
    /// Mean absolute attribution per feature over `local`.
    pub global: Vec<f64>,
    pub reference_fingerprint: String,
    pub ig_steps: usize,
    pub baseline: String,
}

impl AttributionReport {
    /// Features by decreasing global score (ties by feature id).
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self.feature_ids.iter().cloned().zip(self.global.iter().copied()).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn top(&self, k: usize) -> Vec<(String, f64)> {
        let mut v = self.ranked();
        v.truncate(k);
        v
    }
}

fn mean_abs(local: &BTreeMap<String, Vec<f64>>, d: usize) -> Vec<f64> {
    let mut g = vec![0.0; d];
    if local.is_empty() {
        return g;
    }
    for row in local.values() {
        for (acc, v) in g.iter_mut().zip(row) {
            *acc += v.abs();
        }
    }
    let n = local.len() as f64;
    g.iter().map(|s| s / n).collect()
}

/// Integrated gradients for each individual against one reference, with
/// per-modality mean absolute scores.
pub fn global_attribution(
    individuals: &[Sample],
    r: &Reference,
    params: &ModelParams,
    modality_names: &[String],
    feature_ids: &[Vec<String>],
    cfg: &ExplainerConfig,
) -> Result<Vec<AttributionReport>> {
    cfg.validate()?;
    let in_ref: HashSet<&str> = r.ids.iter().map(String::as_str).collect();
    if let Some(x) = individuals.iter().find(|x| in_ref.contains(x.id.as_str())) {
        return Err(CoreError::Data(format!("individual {} is also in the reference batch", x.id)));
    }
    let mut seen = HashSet::new();
    if let Some(x) = individuals.iter().find(|x| !seen.insert(x.id.as_str())) {
        return Err(CoreError::Data(format!("individual {} listed twice", x.id)));
    }
    let baseline = baselines().create(&cfg.baseline)?;
    let results: Vec<Vec<Option<Vec<f64>>>> = individuals
        .par_iter()
        .map(|x| {
            let b = baseline_for(x, r, baseline.as_ref());
            integrated_gradients(x, &b, r, params, cfg.ig_steps)
        })
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    for (m, name) in modality_names.iter().enumerate() {
        let local: BTreeMap<String, Vec<f64>> = individuals
            .iter()
            .zip(&results)
            .filter_map(|(x, ig)| ig[m].clone().map(|v| (x.id.clone(), v)))
            .collect();
        let d = feature_ids[m].len();
        reports.push(AttributionReport {
            modality: name.clone(),
            feature_ids: feature_ids[m].clone(),
            global: mean_abs(&local, d),
            local,
            reference_fingerprint: r.fingerprint.clone(),
            ig_steps: cfg.ig_steps,
            baseline: cfg.baseline.clone(),
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySummary {
    pub modality: String,
    pub n_features: usize,
    /// Mean over features of the global attribution.
    pub mean: f64,
    /// Sum over features of the global attribution.
    pub sum: f64,
}

pub fn modality_attribution_summary(reports: &[AttributionReport]) -> Result<Vec<ModalitySummary>> {
    let Some(first) = reports.first() else {
        return Ok(Vec::new());
    };
    for r in reports {
        if r.reference_fingerprint != first.reference_fingerprint {
            return Err(CoreError::FingerprintMismatch {
                expected: first.reference_fingerprint.clone(),
                found: r.reference_fingerprint.clone(),
            });
        }
    }
    Ok(reports
        .iter()
        .map(|r| {
            let sum: f64 = r.global.iter().map(|v| v.abs()).sum();
            ModalitySummary {
                modality: r.modality.clone(),
                n_features: r.global.len(),
                mean: if r.global.is_empty() { 0.0 } else { sum / r.global.len() as f64 },
                sum,
            }
        })
        .collect())
}

/// `feature_id modality local_or_global value iid`; `iid` is `NA` for
/// global rows.
pub fn attribution_tsv(reports: &[AttributionReport], prov: &Provenance) -> String {
    let mut out = prov.line();
    out.push_str("feature_id\tmodality\tlocal_or_global\tvalue\tiid\n");
    for r in reports {
        for (f, v) in r.ranked() {
            let _ = writeln!(out, "{f}\t{}\tglobal\t{}\tNA", r.modality, fmt_f64(v));
        }
        for (iid, vals) in &r.local {
            for (f, v) in r.feature_ids.iter().zip(vals) {
                let _ = writeln!(out, "{f}\t{}\tlocal\t{}\t{iid}", r.modality, fmt_f64(*v));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMetadata {
    pub reference_fingerprint: String,
    pub reference_size: usize,
    pub ig_steps: usize,
    pub baseline: String,
    pub n_individuals: usize,
}
