use std::collections::HashMap;
use std::fmt::Write as _;

use contig_genetics::io::{fmt_f64, Provenance};
use contig_genetics::{FeatureMatrix, GenotypeMatrix, SnpInfo};
use serde::{Deserialize, Serialize};

use crate::clump::{clump, Clump, ClumpParams};
use crate::error::{AssocError, Result};
use crate::pca::pca_reduce;
use crate::regression::Design;
use crate::scan::{bonferroni_aggregate, snp_scan, SnpStat};
use crate::transform::inverse_normal_transform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssocConfig {
    pub n_components: usize,
    /// Column names looked up in the covariate table.
    pub covariates: Vec<String>,
    pub p_genomewide: f64,
    /// Defaults to `n_components` when unset.
    pub bonferroni_factor: Option<f64>,
    pub clump_p1: f64,
    pub clump_p2: f64,
    pub clump_r2: f64,
    pub clump_kb: f64,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            n_components: 10,
            covariates: vec!["sex".into(), "age".into()],
            p_genomewide: 5e-8,
            bonferroni_factor: None,
            clump_p1: 5e-8,
            clump_p2: 1e-7,
            clump_r2: 0.1,
            clump_kb: 150.0,
        }
    }
}

impl AssocConfig {
    pub fn factor(&self) -> f64 {
        self.bonferroni_factor.unwrap_or(self.n_components as f64)
    }

    pub fn clump_params(&self) -> ClumpParams {
        ClumpParams {
            p1: self.clump_p1,
            p2: self.clump_p2,
            r2: self.clump_r2,
            kb: self.clump_kb,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(AssocError::Invalid("n_components must be positive".into()));
        }
        if !(self.p_genomewide > 0.0 && self.p_genomewide < 1.0) {
            return Err(AssocError::Invalid(format!("p_genomewide {} outside (0, 1)", self.p_genomewide)));
        }
        if !(self.factor() >= 1.0) {
            return Err(AssocError::Invalid(format!("bonferroni_factor {} below 1", self.factor())));
        }
        self.clump_params().validate()
    }
}

#[derive(Debug, Clone)]
pub struct AssociationResult {
    pub snps: Vec<SnpInfo>,
    /// `stats[s][k]`.
    pub stats: Vec<Vec<SnpStat>>,
    pub p_agg: Vec<f64>,
    pub monomorphic: Vec<bool>,
    pub clumps: Vec<Clump>,
    /// Clump index SNP per SNP, if assigned.
    pub clump_of: Vec<Option<usize>>,
    pub explained_variance: Vec<f64>,
    pub n_individuals: usize,
    pub df: usize,
}

impl AssociationResult {
    pub fn n_snps(&self) -> usize {
        self.snps.len()
    }

    /// Clumps whose index SNP has aggregated p at or below `threshold`.
    pub fn significant_clumps(&self, threshold: f64) -> Vec<&Clump> {
        self.clumps.iter().filter(|c| self.p_agg[c.index] <= threshold).collect()
    }
}

/// Individuals present in all three tables, in embedding order.
fn align(embeddings: &FeatureMatrix, g: &GenotypeMatrix, cov: &FeatureMatrix) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let gi: HashMap<&str, usize> = g.individuals().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let ci: HashMap<&str, usize> = cov.row_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut e = Vec::new();
    let mut gg = Vec::new();
    let mut cc = Vec::new();
    for (i, id) in embeddings.row_ids.iter().enumerate() {
        if let (Some(&a), Some(&b)) = (gi.get(id.as_str()), ci.get(id.as_str())) {
            e.push(i);
            gg.push(a);
            cc.push(b);
        }
    }
    (e, gg, cc)
}

/// PCA → residualize on covariates → rank-INT per component → per-SNP scan
/// with the same covariates → Bonferroni aggregation → clumping.
pub fn run_association(
    embeddings: &FeatureMatrix,
    genotypes: &GenotypeMatrix,
    covariates: &FeatureMatrix,
    cfg: &AssocConfig,
) -> Result<AssociationResult> {
    cfg.validate()?;
    let cov_cols: Vec<usize> = cfg
        .covariates
        .iter()
        .map(|name| {
            covariates
                .col_ids
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| AssocError::Invalid(format!("covariate column {name:?} not found")))
        })
        .collect::<Result<_>>()?;
    let (ei, gi, ci) = align(embeddings, genotypes, covariates);
    let n = ei.len();
    if n <= cfg.n_components {
        return Err(AssocError::Invalid(format!(
            "{n} individuals shared by embeddings, genotypes and covariates; need more than {}",
            cfg.n_components
        )));
    }
    let d = embeddings.n_cols();
    let data: Vec<f64> = ei.iter().flat_map(|&i| embeddings.row(i).iter().copied()).collect();
    let pca = pca_reduce(&data, n, d, cfg.n_components)?;
    let cov: Vec<Vec<f64>> = cov_cols
        .iter()
        .map(|&c| ci.iter().map(|&i| covariates.get(i, c)).collect())
        .collect();
    let design = Design::new(n, &cov)?;
    let traits: Vec<Vec<f64>> = (0..cfg.n_components)
        .map(|k| inverse_normal_transform(&design.residualize(&pca.score_column(k))))
        .collect::<Result<_>>()?;

    let g = genotypes.select_individuals(&gi);
    let scan = snp_scan(&g, &traits, &cov)?;
    let factor = cfg.factor();
    let p_agg: Vec<f64> = scan
        .stats
        .iter()
        .map(|s| bonferroni_aggregate(&s.iter().map(|x| x.p).collect::<Vec<_>>(), factor))
        .collect::<Result<_>>()?;
    let clumps = clump(&g, &p_agg, &cfg.clump_params())?;
    let mut clump_of = vec![None; p_agg.len()];
    for c in &clumps {
        clump_of[c.index] = Some(c.index);
        for &m in &c.members {
            clump_of[m] = Some(c.index);
        }
    }
    Ok(AssociationResult {
        snps: scan.snps,
        stats: scan.stats,
        p_agg,
        monomorphic: scan.monomorphic,
        clumps,
        clump_of,
        explained_variance: pca.explained_variance,
        n_individuals: n,
        df: scan.df,
    })
}

/// `snp_id chrom pos beta_k t_k p_k... p_agg clump_id`, one row per SNP.
pub fn summary_tsv(r: &AssociationResult, prov: &Provenance) -> String {
    let k = r.stats.first().map_or(0, Vec::len);
    let mut out = prov.line();
    out.push_str("snp_id\tchrom\tpos");
    for j in 0..k {
        let _ = write!(out, "\tbeta_{j}\tt_{j}\tp_{j}");
    }
    out.push_str("\tp_agg\tclump_id\tmonomorphic\n");
    for (s, info) in r.snps.iter().enumerate() {
        let _ = write!(out, "{}\t{}\t{}", info.id, info.chrom, info.pos);
        for st in &r.stats[s] {
            let _ = write!(out, "\t{}\t{}\t{}", fmt_f64(st.beta), fmt_f64(st.t), fmt_f64(st.p));
        }
        let clump_id = r.clump_of[s].map_or("NA", |c| r.snps[c].id.as_str());
        let _ = writeln!(out, "\t{}\t{}\t{}", fmt_f64(r.p_agg[s]), clump_id, r.monomorphic[s] as u8);
    }
    out
}

/// `index_snp chrom pos p_agg n_members members`; members comma-separated.
pub fn clump_report_tsv(r: &AssociationResult, prov: &Provenance) -> String {
    let mut out = prov.line();
    out.push_str("index_snp\tchrom\tpos\tp_agg\tn_members\tmembers\n");
    for c in &r.clumps {
        let s = &r.snps[c.index];
        let members: Vec<&str> = c.members.iter().map(|&m| r.snps[m].id.as_str()).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            s.id,
            s.chrom,
            s.pos,
            fmt_f64(r.p_agg[c.index]),
            members.len(),
            if members.is_empty() { "NA".to_string() } else { members.join(",") }
        );
    }
    out
}
