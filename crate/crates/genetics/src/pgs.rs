use std::collections::{HashMap, HashSet};

use crate::error::{GeneticsError, Result};
use crate::features::FeatureMatrix;
use crate::genotype::GenotypeMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PgsEntry {
    pub snp_id: String,
    pub effect_allele: String,
    pub weight: f64,
}

/// Weights of one polygenic score.
#[derive(Debug, Clone, PartialEq)]
pub struct PgsWeightFile {
    pub score_id: String,
    pub entries: Vec<PgsEntry>,
}

impl PgsWeightFile {
    pub fn new(score_id: impl Into<String>, entries: Vec<PgsEntry>) -> Result<Self> {
        let score_id = score_id.into();
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.snp_id.as_str()) {
                return Err(GeneticsError::Invalid(format!(
                    "score {score_id} lists SNP {} twice",
                    e.snp_id
                )));
            }
        }
        Ok(Self { score_id, entries })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coverage {
    pub score_id: String,
    pub used: usize,
    /// SNPs of the weight file absent from the genotypes.
    pub skipped: usize,
}

/// Weighted dosage sum over the SNPs shared by the weights and genotypes.
///
/// Genotypes are assumed to be coded with respect to the weight file's
/// effect allele. Missing calls are mode-imputed.
pub fn compute_pgs(g: &GenotypeMatrix, w: &PgsWeightFile) -> Result<(Vec<f64>, Coverage)> {
    let index: HashMap<&str, usize> = g.snps().iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    score_with_index(g, w, &index)
}

fn score_with_index(g: &GenotypeMatrix, w: &PgsWeightFile, index: &HashMap<&str, usize>) -> Result<(Vec<f64>, Coverage)> {
    let mut scores = vec![0.0; g.n_individuals()];
    let mut used = 0;
    for e in &w.entries {
        let Some(&s) = index.get(e.snp_id.as_str()) else {
            continue;
        };
        used += 1;
        for (acc, d) in scores.iter_mut().zip(g.imputed_column(s)) {
            *acc += e.weight * d;
        }
    }
    if used == 0 {
        return Err(GeneticsError::NoOverlap {
            score: w.score_id.clone(),
            score_sample: w.entries.iter().take(3).map(|e| e.snp_id.clone()).collect(),
            genotype_sample: g.snps().iter().take(3).map(|s| s.id.clone()).collect(),
        });
    }
    let coverage = Coverage {
        score_id: w.score_id.clone(),
        used,
        skipped: w.entries.len() - used,
    };
    Ok((scores, coverage))
}

/// One output column per weight file, in input order.
pub fn compute_pgs_batch(g: &GenotypeMatrix, files: &[PgsWeightFile]) -> Result<(FeatureMatrix, Vec<Coverage>)> {
    let index: HashMap<&str, usize> = g.snps().iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut cols = Vec::with_capacity(files.len());
    let mut coverage = Vec::with_capacity(files.len());
    for w in files {
        let (s, c) = score_with_index(g, w, &index)?;
        cols.push(s);
        coverage.push(c);
    }
    let ids = files.iter().map(|f| f.score_id.clone()).collect();
    Ok((FeatureMatrix::from_columns(g.individuals().to_vec(), ids, &cols)?, coverage))
}
