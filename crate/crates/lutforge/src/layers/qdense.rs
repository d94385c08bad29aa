//! Quantized matmul dense layer for hybrid models: affine with element-wise
//! quantized weights and activations, lowered to constant multiplies.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fxp::{QMode, QuantizerState};

#[derive(Debug, Clone)]
pub struct QDenseLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Weight quantizer, one element per (k, l) entry, row-major.
    pub q_w: QuantizerState,
    /// Activation quantizer, one element per input channel.
    pub q_act: QuantizerState,
}

pub struct QDenseCache {
    pub x: Array2<f64>,
    pub xq: Array2<f64>,
    pub wq: Array2<f64>,
}

impl QDenseLayer {
    pub fn new<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (c_in as f64).sqrt();
        Self {
            c_in,
            c_out,
            weights: Array2::from_shape_fn((c_in, c_out), |_| rng.gen_range(-bound..bound)),
            bias: Array1::zeros(c_out),
            q_w: QuantizerState::new(QMode::Sat, c_in * c_out),
            q_act: QuantizerState::new(QMode::Sat, c_in),
        }
    }

    pub fn bypass_quantizers(mut self) -> Self {
        self.q_w.bypass = true;
        self.q_act.bypass = true;
        self
    }

    #[inline]
    fn welem(&self, k: usize, l: usize) -> usize {
        k * self.c_out + l
    }

    /// Quantized weight value as it will appear in hardware.
    pub fn weight_fixed(&self, k: usize, l: usize) -> f64 {
        self.q_w.quantize_elem(self.welem(k, l), self.weights[[k, l]])
    }

    /// Fractional bits of the accumulator for output `l`: the finest
    /// product grid over unpruned (activation, weight) pairs.
    pub fn acc_frac_bits(&self, l: usize) -> i32 {
        let mut best: Option<i32> = None;
        for k in 0..self.c_in {
            let we = self.welem(k, l);
            if self.q_act.width(k) == 0 || self.q_w.width(we) == 0 {
                continue;
            }
            let f = self.q_act.eff_f(k) + self.q_w.eff_f(we);
            best = Some(best.map_or(f, |b| b.max(f)));
        }
        best.unwrap_or(0)
    }

    /// Bias rounded onto the accumulator grid; this exact value is what the
    /// lowered program adds, so eval and hardware agree.
    pub fn bias_fixed(&self, l: usize) -> f64 {
        if self.q_act.bypass && self.q_w.bypass {
            return self.bias[l];
        }
        let scale = (self.acc_frac_bits(l) as f64).exp2();
        (self.bias[l] * scale).round() / scale
    }

    pub fn check_eval_ready(&self) -> Result<()> {
        if (!self.q_act.bypass && !self.q_act.calibrated)
            || (!self.q_w.bypass && !self.q_w.calibrated)
        {
            return Err(Error::Quant(
                "uncalibrated quantizer in eval mode; run a training forward first".into(),
            ));
        }
        Ok(())
    }

    pub fn forward(
        &mut self,
        x: ArrayView2<f64>,
        training: bool,
    ) -> Result<(Array2<f64>, QDenseCache)> {
        let (batch, c_in) = x.dim();
        if c_in != self.c_in {
            return Err(Error::Shape(format!(
                "q_dense expects {} inputs, got {}",
                self.c_in, c_in
            )));
        }
        if !training {
            self.check_eval_ready()?;
        }
        if training {
            for k in 0..c_in {
                let col = x.column(k);
                let max_abs = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let neg = col.iter().any(|&v| v < 0.0);
                self.q_act.calibrate_elem(k, max_abs, neg);
            }
            for k in 0..c_in {
                for l in 0..self.c_out {
                    let w = self.weights[[k, l]];
                    self.q_w.calibrate_elem(self.welem(k, l), w.abs(), w < 0.0);
                }
            }
        }
        let mut xq = Array2::zeros((batch, c_in));
        for b in 0..batch {
            for k in 0..c_in {
                xq[[b, k]] = self.q_act.quantize_elem(k, x[[b, k]]);
            }
        }
        let mut wq = Array2::zeros((c_in, self.c_out));
        for k in 0..c_in {
            for l in 0..self.c_out {
                wq[[k, l]] = self.q_w.quantize_elem(self.welem(k, l), self.weights[[k, l]]);
            }
        }
        let mut out = xq.dot(&wq);
        for b in 0..batch {
            for l in 0..self.c_out {
                out[[b, l]] += self.bias[l];
            }
        }
        Ok((out, QDenseCache { x: x.to_owned(), xq, wq }))
    }

    /// Exact eval-mode forward for one sample, on the fixed-point grid the
    /// lowered program uses (including the rounded bias).
    pub fn eval_forward_sample(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.c_in {
            return Err(Error::Shape(format!(
                "q_dense expects {} inputs, got {}",
                self.c_in,
                x.len()
            )));
        }
        self.check_eval_ready()?;
        let xq: Vec<f64> =
            (0..self.c_in).map(|k| self.q_act.quantize_elem(k, x[k])).collect();
        let mut out = vec![0.0; self.c_out];
        for l in 0..self.c_out {
            let mut acc = 0.0;
            for (k, &xv) in xq.iter().enumerate() {
                acc += self.weight_fixed(k, l) * xv;
            }
            out[l] = acc + self.bias_fixed(l);
        }
        Ok(out)
    }

    pub fn backward(&self, cache: &QDenseCache, d_out: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
        let (batch, c_in) = cache.x.dim();
        let c_out = self.c_out;

        // d_xq = d_out . wq^T ; d_wq = xq^T . d_out
        let d_xq = d_out.dot(&cache.wq.t());
        let d_wq = cache.xq.t().dot(&d_out);

        let mut g_w = Array2::zeros((c_in, c_out));
        let mut g_qw_f = vec![0.0; self.q_w.len()];
        for k in 0..c_in {
            for l in 0..c_out {
                let e = self.welem(k, l);
                let w = self.weights[[k, l]];
                g_w[[k, l]] = d_wq[[k, l]] * self.q_w.grad_mask_elem(e, w);
                g_qw_f[e] += d_wq[[k, l]] * self.q_w.grad_f_raw_elem(e, w);
            }
        }

        let mut g_b = Array1::zeros(c_out);
        for b in 0..batch {
            for l in 0..c_out {
                g_b[l] += d_out[[b, l]];
            }
        }

        let mut d_x = Array2::zeros((batch, c_in));
        let mut g_qact_f = vec![0.0; self.q_act.len()];
        for b in 0..batch {
            for k in 0..c_in {
                let xv = cache.x[[b, k]];
                d_x[[b, k]] = d_xq[[b, k]] * self.q_act.grad_mask_elem(k, xv);
                g_qact_f[k] += d_xq[[b, k]] * self.q_act.grad_f_raw_elem(k, xv);
            }
        }

        let mut flat = Vec::with_capacity(self.param_count());
        flat.extend(g_w.iter());
        flat.extend(g_b.iter());
        flat.extend(g_qw_f.iter());
        flat.extend(g_qact_f.iter());
        (d_x, flat)
    }

    pub fn param_count(&self) -> usize {
        self.c_in * self.c_out * 2 + self.c_out + self.c_in
    }

    pub fn get_params(&self, out: &mut Vec<f64>) {
        out.extend(self.weights.iter());
        out.extend(self.bias.iter());
        out.extend(self.q_w.f_raw.iter());
        out.extend(self.q_act.f_raw.iter());
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for v in self.weights.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.bias.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.q_w.f_raw.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.q_act.f_raw.iter_mut() {
            *v = it.next().unwrap();
        }
        debug_assert!(it.next().is_none());
    }

    /// Bit-product resource term: sum over weights of bits(w) * bits(x).
    pub fn ebops_hard(&self) -> f64 {
        let mut total = 0.0;
        for k in 0..self.c_in {
            for l in 0..self.c_out {
                total += self.q_w.width(self.welem(k, l)) as f64 * self.q_act.width(k) as f64;
            }
        }
        total
    }

    pub fn ebops_soft(&self) -> f64 {
        let mut total = 0.0;
        for k in 0..self.c_in {
            for l in 0..self.c_out {
                total += self.q_w.soft_width(self.welem(k, l)) * self.q_act.soft_width(k);
            }
        }
        total
    }

    pub fn ebops_grad_flat(&self) -> Vec<f64> {
        let mut flat = vec![0.0; self.param_count()];
        let qw_off = self.c_in * self.c_out + self.c_out;
        let qact_off = qw_off + self.c_in * self.c_out;
        for k in 0..self.c_in {
            let act_soft = self.q_act.soft_width(k);
            let act_grad = self.q_act.soft_width_grad(k);
            for l in 0..self.c_out {
                let e = self.welem(k, l);
                let w_soft = self.q_w.soft_width(e);
                flat[qw_off + e] += act_soft * self.q_w.soft_width_grad(e);
                flat[qact_off + k] += w_soft * act_grad;
            }
        }
        flat
    }
}
