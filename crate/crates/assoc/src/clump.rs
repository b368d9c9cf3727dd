use std::cmp::Ordering;
use std::collections::HashMap;

use contig_genetics::GenotypeMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{AssocError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClumpParams {
    pub p1: f64,
    pub p2: f64,
    pub r2: f64,
    pub kb: f64,
}

impl ClumpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r2 > 0.0 && self.r2 < 1.0) {
            return Err(AssocError::Invalid(format!("clump r2 {} outside (0, 1)", self.r2)));
        }
        if self.p2 < self.p1 {
            return Err(AssocError::Invalid(format!("clump p2 {} below p1 {}", self.p2, self.p1)));
        }
        if !(self.kb >= 0.0) {
            return Err(AssocError::Invalid(format!("clump kb {} negative", self.kb)));
        }
        Ok(())
    }
}

/// One LD clump; indices refer to SNP columns of the genotype matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clump {
    pub index: usize,
    /// Non-index members, in genomic order.
    pub members: Vec<usize>,
}

/// Squared Pearson correlation of two dosage columns; 0 if either is constant.
pub fn r_squared(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab * sab / (saa * sbb)
}

/// Greedy LD clumping.
///
/// SNPs with `p <= p1` become index SNPs in order of increasing p (ties by
/// chromosome then position). Each index absorbs every still-unassigned SNP
/// with `p <= p2` on the same chromosome within `kb` kilobases whose dosage
/// r² with the index is at least `r2`. Dosages are mode-imputed.
pub fn clump(g: &GenotypeMatrix, p: &[f64], params: &ClumpParams) -> Result<Vec<Clump>> {
    params.validate()?;
    if p.len() != g.n_snps() {
        return Err(AssocError::Invalid(format!("{} p-values for {} SNPs", p.len(), g.n_snps())));
    }
    let snps = g.snps();
    let key = |i: usize, j: usize| -> Ordering {
        p[i].total_cmp(&p[j])
            .then(snps[i].chrom.cmp(&snps[j].chrom))
            .then(snps[i].pos.cmp(&snps[j].pos))
            .then(snps[i].id.cmp(&snps[j].id))
    };
    let mut candidates: Vec<usize> = (0..p.len()).filter(|&i| p[i] <= params.p1).collect();
    candidates.sort_by(|&a, &b| key(a, b));

    // secondary pool, grouped per chromosome in genomic order
    let mut pool: HashMap<u8, Vec<usize>> = HashMap::new();
    for i in (0..p.len()).filter(|&i| p[i] <= params.p2) {
        pool.entry(snps[i].chrom).or_default().push(i);
    }
    for v in pool.values_mut() {
        v.sort_by(|&a, &b| snps[a].pos.cmp(&snps[b].pos).then(snps[a].id.cmp(&snps[b].id)));
    }

    let mut dosage_cache: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut assigned = vec![false; p.len()];
    let window = (params.kb * 1000.0).floor() as u64;
    let mut clumps = Vec::new();
    for idx in candidates {
        if assigned[idx] {
            continue;
        }
        assigned[idx] = true;
        let mut members = Vec::new();
        let chrom_pool = pool.get(&snps[idx].chrom).map(Vec::as_slice).unwrap_or(&[]);
        for &j in chrom_pool {
            if assigned[j] || snps[j].pos.abs_diff(snps[idx].pos) > window {
                continue;
            }
            let di = dosage_cache.entry(idx).or_insert_with(|| g.imputed_column(idx)).clone();
            let dj = dosage_cache.entry(j).or_insert_with(|| g.imputed_column(j));
            if r_squared(&di, dj) >= params.r2 {
                assigned[j] = true;
                members.push(j);
            }
        }
        clumps.push(Clump { index: idx, members });
    }
    Ok(clumps)
}
