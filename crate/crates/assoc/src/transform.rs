use crate::error::{AssocError, Result};
use crate::special::normal_quantile;

/// Blom offset of the rank-based inverse-normal transform.
pub const BLOM_OFFSET: f64 = 0.375;

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// `z_i = Φ⁻¹((rank_i − 0.375) / (n + 0.25))`.
pub fn inverse_normal_transform(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(AssocError::Invalid(format!("inverse-normal transform needs n >= 3, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AssocError::Invalid("non-finite input to inverse-normal transform".into()));
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(AssocError::ConstantInput);
    }
    let denom = n as f64 + 1.0 - 2.0 * BLOM_OFFSET;
    Ok(average_ranks(x)
        .into_iter()
        .map(|r| normal_quantile((r - BLOM_OFFSET) / denom))
        .collect())
}
