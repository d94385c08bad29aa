//! Per-element batch normalization over the (c_in, c_out) table grid.

use ndarray::Array2;

/// Batch-norm state for one LUT-Dense layer.
///
/// Statistics are tracked per (c_in, c_out) grid element; the eval-mode
/// transform is the affine `a*y + b` with `a = gamma / sqrt(var + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
    pub running_mean: Array2<f64>,
    pub running_var: Array2<f64>,
    pub momentum: f64,
    pub eps: f64,
    /// True once training statistics have been accumulated at least once.
    pub populated: bool,
}

impl BatchNormState {
    pub fn new(c_in: usize, c_out: usize) -> Self {
        Self {
            gamma: Array2::ones((c_in, c_out)),
            beta: Array2::zeros((c_in, c_out)),
            running_mean: Array2::zeros((c_in, c_out)),
            running_var: Array2::ones((c_in, c_out)),
            momentum: 0.1,
            eps: 1e-5,
            populated: false,
        }
    }

    /// Eval-mode affine coefficients `(a, b)` for one grid element.
    pub fn affine(&self, j: usize, i: usize) -> (f64, f64) {
        let a = self.gamma[[j, i]] / (self.running_var[[j, i]] + self.eps).sqrt();
        let b = self.beta[[j, i]] - a * self.running_mean[[j, i]];
        (a, b)
    }

    /// Fold one batch of per-element statistics into the running estimates.
    pub fn update_running(&mut self, mean: &Array2<f64>, var: &Array2<f64>) {
        let m = self.momentum;
        self.running_mean.zip_mut_with(mean, |r, &b| *r += m * (b - *r));
        self.running_var.zip_mut_with(var, |r, &b| *r += m * (b - *r));
        self.populated = true;
    }
}
