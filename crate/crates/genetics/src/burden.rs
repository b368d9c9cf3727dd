use std::collections::{BTreeMap, HashMap};

use crate::error::{GeneticsError, Result};
use crate::features::FeatureMatrix;
use crate::genotype::GenotypeMatrix;

pub const DEFAULT_MAF_CUTOFF: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct VariantAnnotation {
    pub gene_id: String,
    pub is_damaging: bool,
    pub maf: f64,
}

/// Gene assignment and functional annotation per variant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BurdenAnnotation {
    pub variants: BTreeMap<String, VariantAnnotation>,
}

impl BurdenAnnotation {
    pub fn insert(&mut self, snp_id: impl Into<String>, ann: VariantAnnotation) -> Result<()> {
        if !(0.0..=1.0).contains(&ann.maf) {
            return Err(GeneticsError::Invalid(format!("maf {} outside [0, 1]", ann.maf)));
        }
        self.variants.insert(snp_id.into(), ann);
        Ok(())
    }

    /// Distinct genes, sorted.
    pub fn genes(&self) -> Vec<String> {
        let mut genes: Vec<String> = self.variants.values().map(|a| a.gene_id.clone()).collect();
        genes.sort();
        genes.dedup();
        genes
    }
}

/// Per-gene carrier indicator of damaging variants rarer than `maf_cutoff`.
///
/// Columns follow the sorted gene ids of the annotation. Missing calls count
/// as non-carriers.
pub fn compute_burden(g: &GenotypeMatrix, ann: &BurdenAnnotation, maf_cutoff: f64) -> Result<FeatureMatrix> {
    if !(0.0..=1.0).contains(&maf_cutoff) {
        return Err(GeneticsError::Config(format!("maf cutoff {maf_cutoff} outside [0, 1]")));
    }
    let index: HashMap<&str, usize> = g.snps().iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let genes = ann.genes();
    let gene_col: HashMap<&str, usize> = genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let n = g.n_individuals();
    let p = genes.len();
    let mut data = vec![0.0; n * p];
    for (snp_id, a) in &ann.variants {
        let s = *index
            .get(snp_id.as_str())
            .ok_or_else(|| GeneticsError::Invalid(format!("annotated SNP {snp_id} not in genotypes")))?;
        if !a.is_damaging || a.maf >= maf_cutoff {
            continue;
        }
        let c = gene_col[a.gene_id.as_str()];
        for (i, &code) in g.column(s).iter().enumerate() {
            if code != crate::genotype::MISSING && code >= 1 {
                data[i * p + c] = 1.0;
            }
        }
    }
    FeatureMatrix::new(g.individuals().to_vec(), genes, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::SnpInfo;
    use proptest::prelude::*;

    fn geno(cols: Vec<Vec<Option<u8>>>) -> GenotypeMatrix {
        let n = cols[0].len();
        let snps = (0..cols.len())
            .map(|s| SnpInfo {
                id: format!("v{s}"),
                chrom: 1,
                pos: s as u64,
            })
            .collect();
        GenotypeMatrix::from_columns((0..n).map(|i| format!("i{i}")).collect(), snps, cols).unwrap()
    }

    fn ann(entries: &[(&str, &str, bool, f64)]) -> BurdenAnnotation {
        let mut a = BurdenAnnotation::default();
        for (snp, gene, dmg, maf) in entries {
            a.insert(
                *snp,
                VariantAnnotation {
                    gene_id: gene.to_string(),
                    is_damaging: *dmg,
                    maf: *maf,
                },
            )
            .unwrap();
        }
        a
    }

    #[test]
    fn single_damaging_rare_carrier() {
        let g = geno(vec![vec![Some(1), Some(0)]]);
        let m = compute_burden(&g, &ann(&[("v0", "G", true, 0.001)]), DEFAULT_MAF_CUTOFF).unwrap();
        assert_eq!(m.col_ids, vec!["G"]);
        assert_eq!(m.column(0), vec![1.0, 0.0]);
    }

    #[test]
    fn common_and_benign_variants_never_count() {
        let g = geno(vec![vec![Some(2)], vec![Some(1)]]);
        let m = compute_burden(&g, &ann(&[("v0", "G", true, 0.05), ("v1", "G", false, 0.001)]), 0.01).unwrap();
        assert_eq!(m.column(0), vec![0.0]);
    }

    #[test]
    fn homozygous_carrier_is_binarized() {
        let g = geno(vec![vec![Some(2), None]]);
        let m = compute_burden(&g, &ann(&[("v0", "G", true, 0.001)]), 0.01).unwrap();
        assert_eq!(m.column(0), vec![1.0, 0.0]);
    }

    #[test]
    fn unknown_snp_and_bad_maf_are_errors() {
        let g = geno(vec![vec![Some(1)]]);
        assert!(compute_burden(&g, &ann(&[("nope", "G", true, 0.001)]), 0.01).is_err());
        let mut a = BurdenAnnotation::default();
        assert!(a
            .insert(
                "v0",
                VariantAnnotation {
                    gene_id: "G".into(),
                    is_damaging: true,
                    maf: 1.5
                }
            )
            .is_err());
    }

    proptest! {
        #[test]
        fn adding_a_qualifying_variant_is_monotone(
            codes in proptest::collection::vec(proptest::option::of(0u8..3), 18),
            genes in proptest::collection::vec(0usize..3, 3),
        ) {
            let g = geno(codes.chunks(6).map(|c| c.to_vec()).collect());
            let gene_names = ["A", "B", "C"];
            let base: Vec<(String, String)> = (0..2).map(|s| (format!("v{s}"), gene_names[genes[s]].to_string())).collect();
            let mut small = BurdenAnnotation::default();
            let mut big = BurdenAnnotation::default();
            for (snp, gene) in &base {
                let va = VariantAnnotation { gene_id: gene.clone(), is_damaging: true, maf: 0.001 };
                small.insert(snp.clone(), va.clone()).unwrap();
                big.insert(snp.clone(), va).unwrap();
            }
            // keep the gene set fixed so columns line up
            for name in gene_names {
                small.insert(format!("pad{name}"), VariantAnnotation { gene_id: name.into(), is_damaging: false, maf: 0.5 }).ok();
            }
            let pad_cols: Vec<Vec<Option<u8>>> = codes.chunks(6).map(|c| c.to_vec()).chain((0..3).map(|_| vec![Some(0); 6])).collect();
            let mut snps: Vec<SnpInfo> = (0..3).map(|s| SnpInfo { id: format!("v{s}"), chrom: 1, pos: s as u64 }).collect();
            snps.extend(gene_names.iter().map(|n| SnpInfo { id: format!("pad{n}"), chrom: 1, pos: 99 }));
            let g2 = GenotypeMatrix::from_columns(g.individuals().to_vec(), snps, pad_cols).unwrap();
            for name in gene_names {
                big.insert(format!("pad{name}"), VariantAnnotation { gene_id: name.into(), is_damaging: false, maf: 0.5 }).ok();
            }
            big.insert("v2", VariantAnnotation { gene_id: gene_names[genes[2]].into(), is_damaging: true, maf: 0.001 }).unwrap();
            let a = compute_burden(&g2, &small, 0.01).unwrap();
            let b = compute_burden(&g2, &big, 0.01).unwrap();
            prop_assert!(a.data.iter().all(|v| *v == 0.0 || *v == 1.0));
            for (x, y) in a.data.iter().zip(&b.data) {
                prop_assert!(y >= x);
            }
        }
    }
}
