use contig_genetics::{GenotypeMatrix, SnpInfo};
use rayon::prelude::*;

use crate::error::{AssocError, Result};
use crate::regression::Design;
use crate::special::t_two_sided_p;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnpStat {
    pub beta: f64,
    pub t: f64,
    pub p: f64,
}

impl SnpStat {
    const NULL: SnpStat = SnpStat {
        beta: 0.0,
        t: 0.0,
        p: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub snps: Vec<SnpInfo>,
    /// `stats[s][k]`: SNP `s`, trait dimension `k`.
    pub stats: Vec<Vec<SnpStat>>,
    /// Constant dosage (or collinear with covariates); reported with p = 1.
    pub monomorphic: Vec<bool>,
    pub df: usize,
}

/// Per-SNP, per-trait OLS of `trait_k ~ 1 + dosage_s + covariates`.
///
/// Uses the Frisch–Waugh–Lovell reduction: both the dosage and the trait are
/// residualized on `[1, covariates]`, which yields the same coefficient and
/// residual sum of squares as the full fit. Dosages are mode-imputed.
/// Each SNP is computed independently, so results do not depend on the
/// number of worker threads.
pub fn snp_scan(g: &GenotypeMatrix, traits: &[Vec<f64>], covariates: &[Vec<f64>]) -> Result<ScanResult> {
    let n = g.n_individuals();
    if traits.iter().any(|t| t.len() != n) {
        return Err(AssocError::Invalid("trait length differs from genotype cohort size".into()));
    }
    let df = n as i64 - covariates.len() as i64 - 2;
    if df <= 0 {
        return Err(AssocError::DegreesOfFreedom(df));
    }
    let design = Design::new(n, covariates)?;
    let ys: Vec<Vec<f64>> = traits.iter().map(|t| design.residualize(t)).collect();
    let yy: Vec<f64> = ys.iter().map(|y| y.iter().map(|v| v * v).sum()).collect();
    let dff = df as f64;

    let per_snp: Vec<(Vec<SnpStat>, bool)> = (0..g.n_snps())
        .into_par_iter()
        .map(|s| {
            let dosage = g.imputed_column(s);
            if dosage.iter().all(|v| *v == dosage[0]) {
                return (vec![SnpStat::NULL; ys.len()], true);
            }
            let gr = design.residualize(&dosage);
            let gg: f64 = gr.iter().map(|v| v * v).sum();
            let raw_ss: f64 = {
                let m = dosage.iter().sum::<f64>() / n as f64;
                dosage.iter().map(|v| (v - m).powi(2)).sum()
            };
            if gg <= 1e-10 * raw_ss {
                return (vec![SnpStat::NULL; ys.len()], true);
            }
            let stats = ys
                .iter()
                .zip(&yy)
                .map(|(y, &yy)| {
                    let gy: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                    let beta = gy / gg;
                    let rss = (yy - beta * gy).max(0.0);
                    let se = (rss / dff / gg).sqrt();
                    let t = if se > 0.0 { beta / se } else { f64::INFINITY.copysign(beta) };
                    let p = t_two_sided_p(t, dff).max(f64::MIN_POSITIVE);
                    SnpStat { beta, t, p }
                })
                .collect();
            (stats, false)
        })
        .collect();

    let (stats, monomorphic) = per_snp.into_iter().unzip();
    Ok(ScanResult {
        snps: g.snps().to_vec(),
        stats,
        monomorphic,
        df: df as usize,
    })
}

/// `min(1, factor · min_k p_k)`.
pub fn bonferroni_aggregate(p: &[f64], factor: f64) -> Result<f64> {
    if p.is_empty() {
        return Err(AssocError::Invalid("no p-values to aggregate".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(AssocError::Invalid(format!("p-value {bad} outside (0, 1]")));
    }
    if !(factor >= 1.0) {
        return Err(AssocError::Invalid(format!("Bonferroni factor {factor} below 1")));
    }
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((factor * min).min(1.0))
}
