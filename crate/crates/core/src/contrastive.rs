//! Image-vs-genetics contrastive loss and its sum over genetic modalities
//! with missing-modality aggregation.

use contig_autodiff::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::registry::Registry;

/// What the per-row softmax denominator sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorMode {
    /// All columns, positive pair included (NT-Xent).
    #[default]
    Standard,
    /// Negatives only (`k != j`). Can go negative.
    ExcludePositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda: f64,
    pub denominator: DenominatorMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            lambda: 0.75,
            denominator: DenominatorMode::Standard,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(CoreError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(CoreError::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        Ok(())
    }
}

/// `L(a,b) = −Σ_j log(exp(cos(a_j,b_j)/τ) / D_j)`.
pub fn pair_loss(g: &mut Graph, za: Var, zb: Var, cfg: &LossConfig) -> Result<Var> {
    let b = g.value(za).rows();
    if b < 2 {
        return Err(CoreError::BatchTooSmall(b));
    }
    let s = g.cosine_similarity(za, zb)?;
    let s = g.scale(s, 1.0 / cfg.tau);
    pair_loss_from_logits(g, s, cfg)
}

fn pair_loss_from_logits(g: &mut Graph, s: Var, cfg: &LossConfig) -> Result<Var> {
    let exclude = cfg.denominator == DenominatorMode::ExcludePositive;
    let lse = g.logsumexp_rows(s, exclude)?;
    let pos = g.diag(s)?;
    let per_row = g.sub(lse, pos)?;
    Ok(g.sum(per_row))
}

/// `λ·L(v,g) + (1−λ)·L(g,v)`.
pub fn contrastive_pair(g: &mut Graph, zv: Var, zg: Var, cfg: &LossConfig) -> Result<Var> {
    let b = g.value(zv).rows();
    if b < 2 {
        return Err(CoreError::BatchTooSmall(b));
    }
    let s = g.cosine_similarity(zv, zg)?;
    let s = g.scale(s, 1.0 / cfg.tau);
    let st = g.transpose(s)?;
    let l_vg = pair_loss_from_logits(g, s, cfg)?;
    let l_gv = pair_loss_from_logits(g, st, cfg)?;
    let a = g.scale(l_vg, cfg.lambda);
    let c = g.scale(l_gv, 1.0 - cfg.lambda);
    Ok(g.add(a, c)?)
}

/// Chooses which rows of a batch enter the loss term of one modality.
pub trait AggregationScheme: Send + Sync {
    fn name(&self) -> &'static str;

    /// Row indices (ascending) used for modality `m`, given per-modality
    /// presence masks.
    fn term_rows(&self, present: &[Vec<bool>], m: usize) -> Vec<usize>;
}

/// Only individuals that have every genetic modality.
pub struct Inner;

impl AggregationScheme for Inner {
    fn name(&self) -> &'static str {
        "inner"
    }

    fn term_rows(&self, present: &[Vec<bool>], _m: usize) -> Vec<usize> {
        let b = present.first().map_or(0, Vec::len);
        (0..b).filter(|&i| present.iter().all(|p| p[i])).collect()
    }
}

/// Each modality term uses every individual that has that modality.
pub struct Outer;

impl AggregationScheme for Outer {
    fn name(&self) -> &'static str {
        "outer"
    }

    fn term_rows(&self, present: &[Vec<bool>], m: usize) -> Vec<usize> {
        (0..present[m].len()).filter(|&i| present[m][i]).collect()
    }
}

pub fn aggregation_schemes() -> Registry<dyn AggregationScheme> {
    let mut r: Registry<dyn AggregationScheme> = Registry::new("aggregation scheme");
    r.register("inner", || Box::new(Inner)).register("outer", || Box::new(Outer));
    r
}

/// Projected embeddings for one batch. Every individual has an image;
/// `present[m][i]` says whether individual `i` has genetic modality `m`.
/// Rows of `z_g[m]` where the mask is false are never read.
#[derive(Debug, Clone)]
pub struct ModalityBatch {
    pub z_v: Var,
    pub z_g: Vec<Var>,
    pub present: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedTerm {
    pub modality: usize,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct MultimodalLoss {
    pub loss: Var,
    /// Per-modality term, `None` when skipped.
    pub terms: Vec<Option<Var>>,
    pub skipped: Vec<SkippedTerm>,
}

impl MultimodalLoss {
    pub fn warnings(&self) -> Vec<String> {
        self.skipped
            .iter()
            .map(|s| format!("modality {} skipped: only {} usable row(s)", s.modality, s.rows))
            .collect()
    }
}

/// Sum over genetic modalities of [`contrastive_pair`], each on the rows
/// picked by `scheme`. Terms with fewer than two rows are skipped.
pub fn multimodal_loss(
    g: &mut Graph,
    batch: &ModalityBatch,
    cfg: &LossConfig,
    scheme: &dyn AggregationScheme,
) -> Result<MultimodalLoss> {
    cfg.validate()?;
    let b = g.value(batch.z_v).rows();
    if batch.z_g.is_empty() || batch.z_g.len() != batch.present.len() {
        return Err(CoreError::Data(format!(
            "{} genetic embeddings but {} masks",
            batch.z_g.len(),
            batch.present.len()
        )));
    }
    let p = g.value(batch.z_v).cols();
    for (m, (&z, mask)) in batch.z_g.iter().zip(&batch.present).enumerate() {
        let t = g.value(z);
        if t.rows() != b || t.cols() != p || mask.len() != b {
            return Err(CoreError::Data(format!(
                "modality {m}: embedding {:?} / mask {} do not match image batch {b}x{p}",
                t.shape(),
                mask.len()
            )));
        }
    }
    let mut terms = Vec::with_capacity(batch.z_g.len());
    let mut skipped = Vec::new();
    let mut total: Option<Var> = None;
    for m in 0..batch.z_g.len() {
        let rows = scheme.term_rows(&batch.present, m);
        if rows.len() < 2 {
            skipped.push(SkippedTerm {
                modality: m,
                rows: rows.len(),
            });
            terms.push(None);
            continue;
        }
        let (zv, zg) = if rows.len() == b {
            (batch.z_v, batch.z_g[m])
        } else {
            (g.select_rows(batch.z_v, &rows)?, g.select_rows(batch.z_g[m], &rows)?)
        };
        let term = contrastive_pair(g, zv, zg, cfg)?;
        terms.push(Some(term));
        total = Some(match total {
            None => term,
            Some(t) => g.add(t, term)?,
        });
    }
    let loss = total.ok_or(CoreError::EmptyLoss)?;
    Ok(MultimodalLoss { loss, terms, skipped })
}

/// Loss value for plain embedding matrices.
pub fn multimodal_loss_value(
    z_v: &Tensor,
    z_g: &[Tensor],
    present: &[Vec<bool>],
    cfg: &LossConfig,
    scheme: &dyn AggregationScheme,
) -> Result<f64> {
    let mut g = Graph::new();
    let batch = ModalityBatch {
        z_v: g.constant(z_v.clone()),
        z_g: z_g.iter().map(|t| g.constant(t.clone())).collect(),
        present: present.to_vec(),
    };
    let out = multimodal_loss(&mut g, &batch, cfg, scheme)?;
    Ok(g.value(out.loss).item())
}
