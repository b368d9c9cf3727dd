use nalgebra::DMatrix;

use crate::error::{AssocError, Result};

#[derive(Debug, Clone)]
pub struct Pca {
    /// Row-major `n × k` component scores.
    pub scores: Vec<f64>,
    /// Row-major `k × d` loadings (unit-norm rows).
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub means: Vec<f64>,
    pub n: usize,
    pub k: usize,
}

impl Pca {
    pub fn score_column(&self, c: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.scores[i * self.k + c]).collect()
    }
}

/// Projects centered `n × d` data onto its top `k` right-singular vectors.
///
/// Each component is oriented so that its largest-magnitude loading is
/// positive.
pub fn pca_reduce(data: &[f64], n: usize, d: usize, k: usize) -> Result<Pca> {
    if data.len() != n * d {
        return Err(AssocError::Invalid(format!("{} values for {n}x{d} data", data.len())));
    }
    if k == 0 || n <= k || d < k {
        return Err(AssocError::Invalid(format!(
            "cannot extract {k} components from {n}x{d} data"
        )));
    }
    let mut means = vec![0.0; d];
    for row in data.chunks(d) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = data.iter().enumerate().map(|(i, v)| v - means[i % d]).collect();
    let x = DMatrix::from_row_slice(n, d, &centered);
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let smax = sv[order[0]];
    let tol = smax * (n.max(d) as f64) * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < k {
        return Err(AssocError::RankDeficient { needed: k, achieved: rank });
    }
    let mut components = Vec::with_capacity(k * d);
    let mut explained_variance = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut row: Vec<f64> = (0..d).map(|j| v_t[(c, j)]).collect();
        let lead = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, v)| *v)
            .unwrap_or(1.0);
        if lead < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.extend(row);
        explained_variance.push(sv[c] * sv[c] / (n as f64 - 1.0));
    }
    let comp = DMatrix::from_row_slice(k, d, &components);
    let scores_m = x * comp.transpose();
    let mut scores = Vec::with_capacity(n * k);
    for i in 0..n {
        for c in 0..k {
            scores.push(scores_m[(i, c)]);
        }
    }
    Ok(Pca {
        scores,
        components,
        explained_variance,
        means,
        n,
        k,
    })
}
