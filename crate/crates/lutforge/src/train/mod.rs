//! Training loop: Adam over the flat parameter vector, cosine-annealing
//! learning rate with warm restarts, exponential resource-pressure
//! schedule, and validation-based Pareto checkpointing.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::LutPrimitiveSpec;
use crate::io::dataset::TaskKind;
use crate::io::metrics::{metric_accuracy, metric_mse};
use crate::layers::Model;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Resource-pressure schedule endpoints; beta_start == beta_end == 0
    /// disables the regularizer.
    pub beta_start: f64,
    pub beta_end: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_base: f64,
    /// First cosine period, in optimizer steps.
    pub restart_period: usize,
    /// Period growth factor per restart (>= 1).
    pub restart_mult: f64,
    pub seed: u64,
    pub val_fraction: f64,
    /// Consecutive non-finite losses tolerated before aborting.
    pub nan_abort_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta_start: 5e-7,
            beta_end: 1e-3,
            epochs: 20,
            batch_size: 128,
            lr_base: 0.02,
            restart_period: 256,
            restart_mult: 2.0,
            seed: 0,
            val_fraction: 0.10,
            nan_abort_steps: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_start < 0.0 || self.beta_end < self.beta_start {
            return Err(Error::Config("need beta_end >= beta_start >= 0".into()));
        }
        if self.beta_start == 0.0 && self.beta_end > 0.0 {
            return Err(Error::Config(
                "exponential beta schedule cannot start at exactly 0; use a small \
                 positive beta_start"
                    .into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.restart_period == 0 {
            return Err(Error::Config("epochs, batch_size, restart_period must be > 0".into()));
        }
        if self.restart_mult < 1.0 {
            return Err(Error::Config("restart_mult must be >= 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Exponential schedule from `beta_start` to `beta_end` over `total` steps.
pub fn beta_at(step: usize, total: usize, cfg: &TrainConfig) -> f64 {
    if cfg.beta_start == 0.0 {
        return 0.0;
    }
    if total == 0 {
        return cfg.beta_start;
    }
    let frac = step as f64 / total as f64;
    cfg.beta_start * (cfg.beta_end / cfg.beta_start).powf(frac)
}

/// Within-period cosine factor `(1 + cos(pi * tau / period)) / 2`.
pub fn cosine_factor(tau: f64, period: f64) -> f64 {
    (1.0 + (std::f64::consts::PI * tau / period).cos()) / 2.0
}

/// Warm-restart cosine learning rate at a global step.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let mut tau = step as f64;
    let mut period = cfg.restart_period as f64;
    while tau >= period {
        tau -= period;
        period *= cfg.restart_mult;
    }
    cfg.lr_base * cosine_factor(tau, period)
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    /// Steps skipped because a gradient was non-finite.
    pub skipped: usize,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0, skipped: 0 }
    }

    /// One bias-corrected update; a non-finite gradient skips the step.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        if grads.iter().any(|g| !g.is_finite()) {
            self.skipped += 1;
            return;
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParetoPoint {
    pub ebops: f64,
    pub val_metric: f64,
    pub checkpoint_id: String,
}

/// Non-dominated (resource, quality) points collected over a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParetoSet {
    pub points: Vec<ParetoPoint>,
    /// True when a larger validation metric is better (accuracy).
    pub higher_better: bool,
}

impl ParetoSet {
    pub fn new(higher_better: bool) -> Self {
        Self { points: Vec::new(), higher_better }
    }

    fn better(&self, a: f64, b: f64) -> bool {
        if self.higher_better {
            a > b
        } else {
            a < b
        }
    }

    fn dominates(&self, a: &ParetoPoint, b: &ParetoPoint) -> bool {
        let no_worse = a.ebops <= b.ebops && !self.better(b.val_metric, a.val_metric);
        let strictly = a.ebops < b.ebops || self.better(a.val_metric, b.val_metric);
        no_worse && strictly
    }

    /// Insert a candidate; returns whether it was kept plus the checkpoint
    /// ids evicted by domination.
    pub fn insert(&mut self, p: ParetoPoint) -> (bool, Vec<String>) {
        if self.points.iter().any(|q| self.dominates(q, &p) || (q.ebops == p.ebops && q.val_metric == p.val_metric)) {
            return (false, Vec::new());
        }
        let mut removed = Vec::new();
        let mut kept = Vec::with_capacity(self.points.len() + 1);
        for q in self.points.drain(..) {
            if Self::dominates_static(self.higher_better, &p, &q) {
                removed.push(q.checkpoint_id);
            } else {
                kept.push(q);
            }
        }
        kept.push(p);
        kept.sort_by(|a, b| a.ebops.partial_cmp(&b.ebops).unwrap());
        self.points = kept;
        (true, removed)
    }

    fn dominates_static(higher_better: bool, a: &ParetoPoint, b: &ParetoPoint) -> bool {
        let better = |x: f64, y: f64| if higher_better { x > y } else { x < y };
        let no_worse = a.ebops <= b.ebops && !better(b.val_metric, a.val_metric);
        let strictly = a.ebops < b.ebops || better(a.val_metric, b.val_metric);
        no_worse && strictly
    }

    /// No point may dominate another.
    pub fn check_invariant(&self) -> Result<()> {
        for (i, a) in self.points.iter().enumerate() {
            for (j, b) in self.points.iter().enumerate() {
                if i != j && self.dominates(a, b) {
                    return Err(Error::Config(format!(
                        "pareto invariant broken: {} dominates {}",
                        a.checkpoint_id, b.checkpoint_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("ebops,val_metric,checkpoint_id\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.ebops, p.val_metric, p.checkpoint_id));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub beta: f64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_metric: f64,
    pub ebops: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub pareto: ParetoSet,
    pub log: Vec<EpochLog>,
    pub checkpoint_dir: Option<PathBuf>,
}

pub struct TrainData {
    pub x_train: Array2<f64>,
    pub y_train: Array1<f64>,
    pub x_val: Array2<f64>,
    pub y_val: Array1<f64>,
    pub task: TaskKind,
    pub n_classes: usize,
}

impl TrainData {
    pub fn from_dataset(ds: &crate::io::Dataset) -> Self {
        let (x_train, y_train) = ds.train_xy();
        let (x_val, y_val) = ds.val_xy();
        Self {
            x_train,
            y_train,
            x_val,
            y_val,
            task: ds.task,
            n_classes: ds.n_classes.unwrap_or(1),
        }
    }
}

/// Softmax cross-entropy loss; returns (mean loss, d loss / d logits).
pub fn softmax_cross_entropy(
    logits: ArrayView2<f64>,
    labels: ArrayView1<f64>,
) -> (f64, Array2<f64>) {
    let (n, k) = logits.dim();
    let mut d = Array2::zeros((n, k));
    let mut loss = 0.0;
    for (b, row) in logits.outer_iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let label = labels[b] as usize;
        loss -= ((exps[label] / z) + 1e-300).ln();
        for i in 0..k {
            let p = exps[i] / z;
            d[[b, i]] = (p - if i == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, d)
}

/// Mean squared error against a scalar target; returns (loss, d/d pred).
pub fn mse_loss(pred: ArrayView2<f64>, targets: ArrayView1<f64>) -> (f64, Array2<f64>) {
    let (n, k) = pred.dim();
    let mut d = Array2::zeros((n, k));
    let mut loss = 0.0;
    for b in 0..n {
        let e = pred[[b, 0]] - targets[b];
        loss += e * e;
        d[[b, 0]] = 2.0 * e / n as f64;
    }
    (loss / n as f64, d)
}

fn val_metric(model: &Model, data: &TrainData) -> Result<f64> {
    let out = model.eval_forward_batch(data.x_val.view())?;
    match data.task {
        TaskKind::Classification => metric_accuracy(out.view(), data.y_val.view()),
        TaskKind::Regression => metric_mse(out.view(), data.y_val.view()),
    }
}

/// Run the full training loop.
///
/// Per step: training forward, `loss = task + beta(t) * ebops_soft`,
/// backward, Adam. Per epoch: eval-mode validation metric and hard EBOPs,
/// Pareto update, checkpoint persistence for members (atomic writes),
/// eviction of dominated checkpoints.
pub fn train(
    model: &mut Model,
    data: &TrainData,
    cfg: &TrainConfig,
    spec: &LutPrimitiveSpec,
    out_dir: Option<&Path>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let n = data.x_train.dim().0;
    if n == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let higher_better = matches!(data.task, TaskKind::Classification);
    let mut pareto = ParetoSet::new(higher_better);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut adam = AdamState::new(model.param_count());
    let mut step = 0usize;
    let mut nan_streak = 0usize;

    let ckpt_dir = out_dir.map(|d| d.join("checkpoints"));
    if let Some(d) = &ckpt_dir {
        std::fs::create_dir_all(d)?;
    }

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_beta = 0.0;
        let mut epoch_lr = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let beta = beta_at(step, total_steps, cfg);
            let lr = lr_at(step, cfg);
            epoch_beta = beta;
            epoch_lr = lr;

            let mut xb = Array2::zeros((chunk.len(), data.x_train.dim().1));
            let mut yb = Array1::zeros(chunk.len());
            for (r, &i) in chunk.iter().enumerate() {
                xb.row_mut(r).assign(&data.x_train.index_axis(Axis(0), i));
                yb[r] = data.y_train[i];
            }

            let (out, caches) = model.forward_train(xb.view())?;
            let (task_loss, d_out) = match data.task {
                TaskKind::Classification => softmax_cross_entropy(out.view(), yb.view()),
                TaskKind::Regression => mse_loss(out.view(), yb.view()),
            };
            let mut grads = model.backward(&caches, d_out.view());
            let mut loss = task_loss;
            if beta > 0.0 {
                loss += beta * model.ebops_soft(spec)?;
                let rg = model.ebops_grad_flat(spec)?;
                for (g, r) in grads.iter_mut().zip(rg.iter()) {
                    *g += beta * r;
                }
            }

            if !loss.is_finite() {
                nan_streak += 1;
                if nan_streak > cfg.nan_abort_steps {
                    return Err(Error::Config(format!(
                        "loss was non-finite for {nan_streak} consecutive steps at epoch \
                         {epoch}, step {step}; lower lr_base or beta"
                    )));
                }
                step += 1;
                continue;
            }
            nan_streak = 0;
            epoch_loss += task_loss * chunk.len() as f64;

            let mut params = model.get_params();
            adam.step(&mut params, &grads, lr);
            model.set_params(&params);
            step += 1;
        }
        let train_loss = epoch_loss / n as f64;
        let metric = val_metric(model, data)?;
        let ebops = model.ebops_hard(spec)?;
        log.push(EpochLog { epoch, beta: epoch_beta, lr: epoch_lr, train_loss, val_metric: metric, ebops });

        let checkpoint_id = format!("ep{epoch:03}");
        let (added, removed) = pareto.insert(ParetoPoint {
            ebops,
            val_metric: metric,
            checkpoint_id: checkpoint_id.clone(),
        });
        if let Some(dir) = &ckpt_dir {
            if added {
                crate::io::manifest::save_manifest(model, &dir.join(format!("{checkpoint_id}.json")))?;
            }
            for id in &removed {
                let _ = std::fs::remove_file(dir.join(format!("{id}.json")));
            }
        }
        pareto.check_invariant()?;
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut csv = String::from("epoch,beta,lr,train_loss,val_metric,ebops\n");
        for e in &log {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.beta, e.lr, e.train_loss, e.val_metric, e.ebops
            ));
        }
        crate::io::atomic_write(&dir.join("run_log.csv"), csv.as_bytes())?;
        crate::io::atomic_write(&dir.join("pareto.csv"), pareto.to_csv().as_bytes())?;
    }

    Ok(TrainResult { pareto, log, checkpoint_dir: ckpt_dir })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_hlf() -> TrainConfig {
        TrainConfig { beta_start: 5e-7, beta_end: 1e-3, ..Default::default() }
    }

    #[test]
    fn beta_schedule_endpoints_and_midpoint() {
        let cfg = cfg_hlf();
        assert_eq!(beta_at(0, 100, &cfg), 5e-7);
        let end = beta_at(100, 100, &cfg);
        assert!((end - 1e-3).abs() < 1e-12);
        let mid = beta_at(50, 100, &cfg);
        assert!((mid - 2.2360679774997896e-5).abs() < 1e-12, "geometric midpoint, got {mid}");
    }

    #[test]
    fn beta_zero_disables_the_schedule() {
        let cfg = TrainConfig { beta_start: 0.0, beta_end: 0.0, ..Default::default() };
        cfg.validate().unwrap();
        assert_eq!(beta_at(17, 100, &cfg), 0.0);
        let bad = TrainConfig { beta_start: 0.0, beta_end: 1e-3, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn beta_is_monotone() {
        let cfg = cfg_hlf();
        let mut prev = 0.0;
        for t in 0..=50 {
            let b = beta_at(t, 50, &cfg);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn cosine_formula_values() {
        assert_eq!(cosine_factor(0.0, 64.0), 1.0);
        assert!(cosine_factor(64.0, 64.0).abs() < 1e-15);
        assert!((cosine_factor(32.0, 64.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lr_restarts_and_stays_in_range() {
        let cfg = TrainConfig { lr_base: 0.1, restart_period: 8, restart_mult: 2.0, ..Default::default() };
        assert_eq!(lr_at(0, &cfg), 0.1);
        // step 8 = start of the second (length 16) period
        assert_eq!(lr_at(8, &cfg), 0.1);
        for t in 0..200 {
            let lr = lr_at(t, &cfg);
            assert!((0.0..=0.1).contains(&lr));
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr_sign() {
        let mut adam = AdamState::new(2);
        let mut params = vec![1.0, -1.0];
        adam.step(&mut params, &[0.3, -0.7], 0.01);
        // bias-corrected first step is ~ -lr * sign(g)
        assert!((params[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((params[1] - (-1.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn adam_zero_grad_changes_nothing() {
        let mut adam = AdamState::new(2);
        let mut params = vec![0.5, 0.25];
        adam.step(&mut params, &[0.0, 0.0], 0.01);
        assert_eq!(params, vec![0.5, 0.25]);
    }

    #[test]
    fn adam_skips_non_finite_gradients() {
        let mut adam = AdamState::new(1);
        let mut params = vec![1.0];
        adam.step(&mut params, &[f64::NAN], 0.01);
        assert_eq!(params, vec![1.0]);
        assert_eq!(adam.skipped, 1);
    }

    #[test]
    fn adam_matches_independent_scalar_reimplementation() {
        let mut adam = AdamState::new(1);
        let mut p = vec![0.7];

        // independent scalar oracle
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.003);
        let (mut m, mut v, mut po) = (0.0f64, 0.0f64, 0.7f64);
        let mut g = 0.13f64;
        for t in 1..=100 {
            adam.step(&mut p, &[g], lr);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            po -= lr * mh / (vh.sqrt() + eps);
            g = (g * 1.1).sin() + 0.01 * t as f64; // arbitrary but deterministic
            assert!((p[0] - po).abs() <= 1e-12, "step {t}: {} vs {po}", p[0]);
        }
    }

    #[test]
    fn pareto_rejects_dominated_points() {
        let mut ps = ParetoSet::new(true);
        ps.insert(ParetoPoint { ebops: 100.0, val_metric: 0.9, checkpoint_id: "a".into() });
        ps.insert(ParetoPoint { ebops: 50.0, val_metric: 0.8, checkpoint_id: "b".into() });
        // dominated: more ebops, worse metric
        let (added, _) = ps.insert(ParetoPoint { ebops: 120.0, val_metric: 0.85, checkpoint_id: "c".into() });
        assert!(!added);
        // dominates "a": cheaper and better
        let (added, removed) =
            ps.insert(ParetoPoint { ebops: 90.0, val_metric: 0.95, checkpoint_id: "d".into() });
        assert!(added);
        assert_eq!(removed, vec!["a".to_string()]);
        ps.check_invariant().unwrap();
        assert_eq!(ps.points.len(), 2);
    }

    #[test]
    fn pareto_lower_better_direction() {
        let mut ps = ParetoSet::new(false); // e.g. mse
        ps.insert(ParetoPoint { ebops: 100.0, val_metric: 0.1, checkpoint_id: "a".into() });
        let (added, _) = ps.insert(ParetoPoint { ebops: 100.0, val_metric: 0.2, checkpoint_id: "b".into() });
        assert!(!added);
        let (added, _) = ps.insert(ParetoPoint { ebops: 50.0, val_metric: 0.2, checkpoint_id: "c".into() });
        assert!(added);
        ps.check_invariant().unwrap();
    }
}
