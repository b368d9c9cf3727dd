use crate::error::{GeneticsError, Result};
use crate::genotype::GenotypeMatrix;

/// Row-major `n × p` matrix of per-individual features with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(row_ids: Vec<String>, col_ids: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if row_ids.len() * col_ids.len() != data.len() {
            return Err(GeneticsError::Invalid(format!(
                "{} values for a {}x{} feature matrix",
                data.len(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        Ok(Self { row_ids, col_ids, data })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[r * p..(r + 1) * p]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, c)).collect()
    }

    /// Builds from column vectors of equal length.
    pub fn from_columns(row_ids: Vec<String>, col_ids: Vec<String>, cols: &[Vec<f64>]) -> Result<Self> {
        let n = row_ids.len();
        let p = col_ids.len();
        if cols.len() != p || cols.iter().any(|c| c.len() != n) {
            return Err(GeneticsError::Invalid("ragged feature columns".into()));
        }
        let mut data = vec![0.0; n * p];
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                data[r * p + c] = *v;
            }
        }
        Self::new(row_ids, col_ids, data)
    }

    /// Horizontal concatenation; row ids must agree.
    pub fn hstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or_else(|| GeneticsError::Invalid("nothing to stack".into()))?;
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut ids = Vec::new();
        for p in parts {
            if p.row_ids != first.row_ids {
                return Err(GeneticsError::Invalid("row ids differ between stacked matrices".into()));
            }
            for c in 0..p.n_cols() {
                cols.push(p.column(c));
                ids.push(p.col_ids[c].clone());
            }
        }
        FeatureMatrix::from_columns(first.row_ids.clone(), ids, &cols)
    }
}

/// Keeps SNP columns `0, k, 2k, …` and mode-imputes missing calls.
pub fn subsample_raw(g: &GenotypeMatrix, k: usize) -> Result<FeatureMatrix> {
    if k == 0 {
        return Err(GeneticsError::Config("subsampling step k must be >= 1".into()));
    }
    if g.n_individuals() == 0 || g.n_snps() == 0 {
        return Err(GeneticsError::Empty);
    }
    let picked: Vec<usize> = (0..g.n_snps()).step_by(k).collect();
    let cols: Vec<Vec<f64>> = picked.iter().map(|&s| g.imputed_column(s)).collect();
    let ids = picked.iter().map(|&s| g.snps()[s].id.clone()).collect();
    FeatureMatrix::from_columns(g.individuals().to_vec(), ids, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::SnpInfo;
    use proptest::prelude::*;

    fn matrix(cols: Vec<Vec<Option<u8>>>) -> GenotypeMatrix {
        let n = cols[0].len();
        let snps = (0..cols.len())
            .map(|s| SnpInfo {
                id: format!("rs{s}"),
                chrom: 1,
                pos: s as u64 * 1000,
            })
            .collect();
        GenotypeMatrix::from_columns((0..n).map(|i| format!("id{i}")).collect(), snps, cols).unwrap()
    }

    #[test]
    fn k_one_keeps_everything_and_imputes() {
        let g = matrix(vec![
            vec![Some(0), Some(1), None, Some(1)],
            vec![Some(2), Some(2), Some(0), Some(1)],
        ]);
        let f = subsample_raw(&g, 1).unwrap();
        assert_eq!(f.n_cols(), 2);
        assert_eq!(f.column(0), vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(f.column(1), vec![2.0, 2.0, 0.0, 1.0]);
    }

    #[test]
    fn tie_breaks_toward_smaller_code() {
        let g = matrix(vec![vec![Some(0), Some(0), Some(2), Some(2), None]]);
        let f = subsample_raw(&g, 1).unwrap();
        assert_eq!(f.column(0)[4], 0.0);
    }

    #[test]
    fn samples_from_index_zero() {
        let g = matrix((0..7).map(|_| vec![Some(1), Some(0)]).collect());
        let f = subsample_raw(&g, 3).unwrap();
        assert_eq!(f.col_ids, vec!["rs0", "rs3", "rs6"]);
        assert!(subsample_raw(&g, 0).is_err());
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let g = GenotypeMatrix::from_columns(vec![], vec![], vec![]).unwrap();
        assert!(matches!(subsample_raw(&g, 1), Err(GeneticsError::Empty)));
    }

    proptest! {
        #[test]
        fn output_has_no_missing_values(
            codes in proptest::collection::vec(proptest::option::of(0u8..3), 40),
            k in 1usize..5,
        ) {
            let cols: Vec<Vec<Option<u8>>> = codes.chunks(8).map(|c| c.to_vec()).collect();
            let g = matrix(cols);
            let f = subsample_raw(&g, k).unwrap();
            prop_assert_eq!(f.n_cols(), g.n_snps().div_ceil(k));
            prop_assert!(f.data.iter().all(|v| *v == 0.0 || *v == 1.0 || *v == 2.0));
        }
    }
}
