use nalgebra::{DMatrix, DVector};

use crate::error::{AssocError, Result};

/// Orthonormal basis of the column space of `[1, covariates]`.
#[derive(Debug, Clone)]
pub struct Design {
    q: DMatrix<f64>,
    n: usize,
}

impl Design {
    /// `covariates` are columns of length `n`.
    pub fn new(n: usize, covariates: &[Vec<f64>]) -> Result<Self> {
        let p = covariates.len() + 1;
        if n <= p {
            return Err(AssocError::Invalid(format!(
                "{n} observations cannot support an intercept plus {} covariates",
                covariates.len()
            )));
        }
        if let Some(c) = covariates.iter().position(|c| c.len() != n) {
            return Err(AssocError::Invalid(format!("covariate {c} has the wrong length")));
        }
        let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { covariates[j - 1][i] });
        let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
        let qr = x.qr();
        let r = qr.r();
        for j in 0..p {
            if r[(j, j)].abs() <= 1e-9 * norms[j].max(f64::MIN_POSITIVE) {
                let what = if j == 0 {
                    "intercept".to_string()
                } else {
                    format!("covariate {}", j - 1)
                };
                return Err(AssocError::SingularDesign(format!("{what} is collinear with earlier columns")));
            }
        }
        Ok(Self { q: qr.q(), n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of columns including the intercept.
    pub fn n_columns(&self) -> usize {
        self.q.ncols()
    }

    /// OLS residuals of `y` on the design (projection applied twice for
    /// numerical orthogonality).
    pub fn residualize(&self, y: &[f64]) -> Vec<f64> {
        let mut r = DVector::from_column_slice(y);
        for _ in 0..2 {
            let coef = self.q.tr_mul(&r);
            r -= &self.q * coef;
        }
        r.as_slice().to_vec()
    }
}

/// Residuals of `y` after OLS on an intercept and `covariates`.
pub fn residualize(y: &[f64], covariates: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(Design::new(y.len(), covariates)?.residualize(y))
}
