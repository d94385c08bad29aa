//! Evaluation metrics.

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Mean argmax accuracy; argmax ties break toward the lowest index.
pub fn metric_accuracy(outputs: ArrayView2<f64>, labels: ArrayView1<f64>) -> Result<f64> {
    let (n, _k) = outputs.dim();
    if n == 0 {
        return Err(Error::Data("accuracy of an empty batch is undefined".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} outputs vs {} labels", labels.len())));
    }
    let mut correct = 0usize;
    for (row, &label) in outputs.outer_iter().zip(labels.iter()) {
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        if best == label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Mean squared error over all output elements.
pub fn metric_mse(outputs: ArrayView2<f64>, targets: ArrayView1<f64>) -> Result<f64> {
    let (n, k) = outputs.dim();
    if n == 0 {
        return Err(Error::Data("mse of an empty batch is undefined".into()));
    }
    if k != 1 || targets.len() != n {
        return Err(Error::Shape("mse wants (n, 1) outputs and n targets".into()));
    }
    let mut acc = 0.0;
    for (row, &t) in outputs.outer_iter().zip(targets.iter()) {
        acc += (row[0] - t).powi(2);
    }
    Ok(acc / n as f64)
}

fn mean_and_sem(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::Data(
            "separation power needs at least 2 samples per group".into(),
        ));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Separation power between two count distributions:
/// `(mu_k - mu_p) / ((sem_k + sem_p) / 2)`.
pub fn metric_separation(counts_k: &[f64], counts_p: &[f64]) -> Result<f64> {
    let (mu_k, sem_k) = mean_and_sem(counts_k)?;
    let (mu_p, sem_p) = mean_and_sem(counts_p)?;
    let denom = (sem_k + sem_p) / 2.0;
    if denom == 0.0 {
        return Err(Error::Data(
            "separation power undefined: both groups have zero standard error".into(),
        ));
    }
    Ok((mu_k - mu_p) / denom)
}
