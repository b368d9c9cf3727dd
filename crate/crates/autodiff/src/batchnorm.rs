use crate::error::{AdError, Result};
use crate::graph::{Graph, Var};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Running statistics for a 1-d batch normalization layer.
///
/// The affine parameters (`gamma`, `beta`) are ordinary graph leaves owned by
/// the caller; this struct only tracks the running mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm1d {
    pub fn new(features: usize) -> Self {
        Self {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }

    /// Train mode normalizes with batch statistics and folds them into the
    /// running estimates; eval mode uses the running estimates only.
    pub fn forward(&mut self, g: &mut Graph, x: Var, gamma: Var, beta: Var, train: bool) -> Result<Var> {
        if g.value(x).cols() != self.features() {
            return Err(AdError::Shape {
                op: "batchnorm1d",
                left: g.value(x).shape().to_vec(),
                right: vec![self.features()],
            });
        }
        if train {
            let (out, stats) = g.batchnorm_train(x, gamma, beta, self.eps)?;
            let m = self.momentum;
            for (r, b) in self.running_mean.iter_mut().zip(&stats.mean) {
                *r = (1.0 - m) * *r + m * b;
            }
            for (r, b) in self.running_var.iter_mut().zip(&stats.var_unbiased) {
                *r = (1.0 - m) * *r + m * b;
            }
            Ok(out)
        } else {
            g.batchnorm_eval(x, gamma, beta, &self.running_mean, &self.running_var, self.eps)
        }
    }

    /// Eval-mode forward that leaves the running statistics untouched.
    pub fn forward_eval(&self, g: &mut Graph, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        g.batchnorm_eval(x, gamma, beta, &self.running_mean, &self.running_var, self.eps)
    }
}
