//! In-memory training data: image features plus genetic modalities with
//! per-individual presence masks, standardized per column.

use std::collections::HashMap;

use contig_autodiff::Tensor;
use contig_genetics::{
    compute_burden, compute_pgs_batch, subsample_raw, BurdenAnnotation, FeatureMatrix, GenotypeMatrix, ModalityMasks,
    PgsWeightFile, SynthData, DEFAULT_MAF_CUTOFF,
};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneticModality {
    pub name: String,
    pub feature_ids: Vec<String>,
    /// Row-major `n × dim`; rows of absent individuals hold zeros.
    pub data: Vec<f64>,
    pub present: Vec<bool>,
}

impl GeneticModality {
    pub fn dim(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub image_dim: usize,
    /// Row-major `n × image_dim`.
    pub images: Vec<f64>,
    pub modalities: Vec<GeneticModality>,
}

/// Which modalities to derive from genotypes and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    /// Any of `raw`, `pgs`, `burden`, in the order they should appear.
    pub modalities: Vec<String>,
    /// Keep every `raw_stride`-th SNP for the raw modality.
    pub raw_stride: usize,
    pub burden_maf_cutoff: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            modalities: vec!["raw".into(), "pgs".into(), "burden".into()],
            raw_stride: 10,
            burden_maf_cutoff: DEFAULT_MAF_CUTOFF,
        }
    }
}

fn restrict(m: FeatureMatrix, keep: &[bool]) -> Result<FeatureMatrix> {
    let rows: Vec<usize> = (0..m.n_rows()).filter(|&i| keep[i]).collect();
    let ids = rows.iter().map(|&i| m.row_ids[i].clone()).collect();
    let data = rows.iter().flat_map(|&i| m.row(i).iter().copied()).collect();
    Ok(FeatureMatrix::new(ids, m.col_ids, data)?)
}

/// Genetic feature tables, one per requested modality, holding only the
/// rows of individuals that have the modality.
pub fn build_modalities(
    genotypes: &GenotypeMatrix,
    pgs: &[PgsWeightFile],
    burden: &BurdenAnnotation,
    masks: &ModalityMasks,
    opts: &FeatureOptions,
) -> Result<Vec<(String, FeatureMatrix)>> {
    let n = genotypes.n_individuals();
    if [&masks.raw, &masks.pgs, &masks.burden].iter().any(|m| m.len() != n) {
        return Err(CoreError::Data("modality masks do not match the genotype cohort".into()));
    }
    let mut out = Vec::new();
    for name in &opts.modalities {
        let (table, mask) = match name.as_str() {
            "raw" => (subsample_raw(genotypes, opts.raw_stride)?, &masks.raw),
            "pgs" => (compute_pgs_batch(genotypes, pgs)?.0, &masks.pgs),
            "burden" => (compute_burden(genotypes, burden, opts.burden_maf_cutoff)?, &masks.burden),
            other => {
                return Err(CoreError::Config(format!(
                    "unknown modality {other:?}; expected raw, pgs or burden"
                )))
            }
        };
        out.push((name.clone(), restrict(table, mask)?));
    }
    Ok(out)
}

impl Dataset {
    /// Individuals are the image rows. An individual has a genetic modality
    /// iff its id appears in that modality's table.
    pub fn from_tables(images: &FeatureMatrix, genetics: &[(String, FeatureMatrix)]) -> Result<Self> {
        if images.n_rows() == 0 {
            return Err(CoreError::Data("no individuals".into()));
        }
        if genetics.is_empty() {
            return Err(CoreError::Data("no genetic modality".into()));
        }
        let n = images.n_rows();
        let mut modalities = Vec::new();
        for (name, table) in genetics {
            let index: HashMap<&str, usize> = table.row_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            let d = table.n_cols();
            if d == 0 {
                return Err(CoreError::Data(format!("modality {name} has no features")));
            }
            let mut data = vec![0.0; n * d];
            let mut present = vec![false; n];
            for (i, id) in images.row_ids.iter().enumerate() {
                if let Some(&r) = index.get(id.as_str()) {
                    data[i * d..(i + 1) * d].copy_from_slice(table.row(r));
                    present[i] = true;
                }
            }
            modalities.push(GeneticModality {
                name: name.clone(),
                feature_ids: table.col_ids.clone(),
                data,
                present,
            });
        }
        Ok(Self {
            ids: images.row_ids.clone(),
            image_dim: images.n_cols(),
            images: images.data.clone(),
            modalities,
        })
    }

    pub fn from_synth(d: &SynthData, opts: &FeatureOptions) -> Result<Self> {
        let tables = build_modalities(&d.genotypes, &d.pgs, &d.burden, &d.masks, opts)?;
        Self::from_tables(&d.images, &tables)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn genetic_dims(&self) -> Vec<usize> {
        self.modalities.iter().map(GeneticModality::dim).collect()
    }

    pub fn image_row(&self, i: usize) -> &[f64] {
        &self.images[i * self.image_dim..(i + 1) * self.image_dim]
    }

    pub fn images_tensor(&self, rows: &[usize]) -> Tensor {
        let data = rows.iter().flat_map(|&i| self.image_row(i).iter().copied()).collect();
        Tensor::matrix(rows.len(), self.image_dim, data).expect("shape")
    }

    /// Features of modality `m` for the given rows (present or not).
    pub fn genetic_tensor(&self, m: usize, rows: &[usize]) -> Tensor {
        let md = &self.modalities[m];
        let data = rows.iter().flat_map(|&i| md.row(i).iter().copied()).collect();
        Tensor::matrix(rows.len(), md.dim(), data).expect("shape")
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            image_dim: self.image_dim,
            images: rows.iter().flat_map(|&i| self.image_row(i).iter().copied()).collect(),
            modalities: self
                .modalities
                .iter()
                .map(|md| GeneticModality {
                    name: md.name.clone(),
                    feature_ids: md.feature_ids.clone(),
                    data: rows.iter().flat_map(|&i| md.row(i).iter().copied()).collect(),
                    present: rows.iter().map(|&i| md.present[i]).collect(),
                })
                .collect(),
        }
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    /// Centers and scales every image and genetic column to unit variance
    /// over the individuals that have it. Constant columns are only centered.
    pub fn standardize(&mut self) {
        let all = vec![true; self.len()];
        standardize_columns(&mut self.images, self.image_dim, &all);
        for md in &mut self.modalities {
            let d = md.dim();
            standardize_columns(&mut md.data, d, &md.present);
        }
    }
}

fn standardize_columns(data: &mut [f64], d: usize, present: &[bool]) {
    let rows: Vec<usize> = (0..present.len()).filter(|&i| present[i]).collect();
    if rows.is_empty() {
        return;
    }
    let n = rows.len() as f64;
    for c in 0..d {
        let mean = rows.iter().map(|&i| data[i * d + c]).sum::<f64>() / n;
        let var = rows.iter().map(|&i| (data[i * d + c] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        for &i in &rows {
            data[i * d + c] = (data[i * d + c] - mean) * scale;
        }
    }
}
