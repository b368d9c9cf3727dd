use std::collections::HashSet;

use crate::error::{GeneticsError, Result};

/// Sentinel for a missing additive code.
pub const MISSING: u8 = u8::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnpInfo {
    pub id: String,
    pub chrom: u8,
    pub pos: u64,
}

/// Additive-coded genotypes (0/1/2 copies of the alternate allele), stored
/// SNP-major so that per-SNP columns are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    individuals: Vec<String>,
    snps: Vec<SnpInfo>,
    values: Vec<u8>,
}

impl GenotypeMatrix {
    /// `columns[s][i]` is the code of individual `i` at SNP `s`; `None` is missing.
    pub fn from_columns(individuals: Vec<String>, snps: Vec<SnpInfo>, columns: Vec<Vec<Option<u8>>>) -> Result<Self> {
        let n = individuals.len();
        if columns.len() != snps.len() {
            return Err(GeneticsError::Invalid(format!(
                "{} SNP columns for {} SNP records",
                columns.len(),
                snps.len()
            )));
        }
        let mut values = Vec::with_capacity(n * snps.len());
        for (s, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(GeneticsError::Invalid(format!(
                    "SNP {} has {} values, expected {n}",
                    snps[s].id,
                    col.len()
                )));
            }
            for v in col {
                match v {
                    None => values.push(MISSING),
                    Some(c @ 0..=2) => values.push(*c),
                    Some(c) => {
                        return Err(GeneticsError::Invalid(format!(
                            "SNP {} has code {c}; additive codes are 0, 1 or 2",
                            snps[s].id
                        )))
                    }
                }
            }
        }
        Self::from_raw(individuals, snps, values)
    }

    pub(crate) fn from_raw(individuals: Vec<String>, snps: Vec<SnpInfo>, values: Vec<u8>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &snps {
            if !seen.insert(s.id.as_str()) {
                return Err(GeneticsError::Invalid(format!("duplicate SNP id {}", s.id)));
            }
        }
        debug_assert_eq!(values.len(), individuals.len() * snps.len());
        Ok(Self {
            individuals,
            snps,
            values,
        })
    }

    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn n_snps(&self) -> usize {
        self.snps.len()
    }

    pub fn individuals(&self) -> &[String] {
        &self.individuals
    }

    pub fn snps(&self) -> &[SnpInfo] {
        &self.snps
    }

    pub fn snp_index(&self, id: &str) -> Option<usize> {
        self.snps.iter().position(|s| s.id == id)
    }

    /// Raw codes of one SNP; [`MISSING`] marks missing calls.
    pub fn column(&self, snp: usize) -> &[u8] {
        let n = self.n_individuals();
        &self.values[snp * n..(snp + 1) * n]
    }

    pub fn dosage(&self, individual: usize, snp: usize) -> Option<u8> {
        match self.column(snp)[individual] {
            MISSING => None,
            c => Some(c),
        }
    }

    /// Most frequent non-missing code of a column; ties go to the smaller code
    /// and an all-missing column yields 0.
    pub fn column_mode(&self, snp: usize) -> u8 {
        let mut counts = [0usize; 3];
        for &c in self.column(snp) {
            if c != MISSING {
                counts[c as usize] += 1;
            }
        }
        let mut best = 0;
        for c in 1..3 {
            if counts[c] > counts[best] {
                best = c;
            }
        }
        best as u8
    }

    /// Column with missing values replaced by the column mode.
    pub fn imputed_column(&self, snp: usize) -> Vec<f64> {
        let mode = self.column_mode(snp);
        self.column(snp)
            .iter()
            .map(|&c| if c == MISSING { mode as f64 } else { c as f64 })
            .collect()
    }

    /// Alternate-allele frequency among non-missing calls.
    pub fn allele_frequency(&self, snp: usize) -> f64 {
        let (mut sum, mut cnt) = (0usize, 0usize);
        for &c in self.column(snp) {
            if c != MISSING {
                sum += c as usize;
                cnt += 1;
            }
        }
        if cnt == 0 {
            0.0
        } else {
            sum as f64 / (2 * cnt) as f64
        }
    }

    /// Restrict to the given SNP indices, in that order.
    pub fn select_snps(&self, idx: &[usize]) -> GenotypeMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_individuals());
        for &s in idx {
            values.extend_from_slice(self.column(s));
        }
        GenotypeMatrix {
            individuals: self.individuals.clone(),
            snps: idx.iter().map(|&s| self.snps[s].clone()).collect(),
            values,
        }
    }

    /// Restrict to the given individuals, in that order.
    pub fn select_individuals(&self, idx: &[usize]) -> GenotypeMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_snps());
        for s in 0..self.n_snps() {
            let col = self.column(s);
            values.extend(idx.iter().map(|&i| col[i]));
        }
        GenotypeMatrix {
            individuals: idx.iter().map(|&i| self.individuals[i].clone()).collect(),
            snps: self.snps.clone(),
            values,
        }
    }

    /// Keep SNPs on autosomes 1..=22.
    pub fn autosomal(&self) -> GenotypeMatrix {
        let idx: Vec<usize> = (0..self.n_snps()).filter(|&s| (1..=22).contains(&self.snps[s].chrom)).collect();
        self.select_snps(&idx)
    }
}

/// Parses chromosome labels the way PLINK numbers them.
pub fn parse_chrom(label: &str) -> Option<u8> {
    let l = label.trim_start_matches("chr");
    match l {
        "X" | "x" => Some(23),
        "Y" | "y" => Some(24),
        "XY" => Some(25),
        "MT" | "M" => Some(26),
        _ => l.parse().ok().filter(|c| (1..=26).contains(c)),
    }
}
