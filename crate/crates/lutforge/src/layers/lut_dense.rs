//! LUT-Dense: a dense-shaped grid of c_in × c_out learned lookup tables,
//! each realized during training as a one-hidden-layer MLP between an
//! element-wise WRAP input quantizer and SAT output quantizer, reduced by
//! plain summation over the input axis.

use ndarray::{Array2, Array3, Array4, ArrayView2, Axis};
use rand::Rng;

use super::{Activation, BatchNormState};
use crate::error::{Error, Result};
use crate::fxp::{QMode, QuantizerState};

/// One LUT-Dense layer.
///
/// MLP weights are stored with the unit input axis dropped:
/// `w0, b0, w1: (c_in, c_out, hidden)`, `b1: (c_in, c_out)`.
/// Quantizer elements are indexed row-major as `j * c_out + i` for input
/// channel `j` and output channel `i`.
#[derive(Debug, Clone)]
pub struct LutDenseLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub w0: Array3<f64>,
    pub b0: Array3<f64>,
    pub w1: Array3<f64>,
    pub b1: Array2<f64>,
    pub q_in: QuantizerState,
    pub q_out: QuantizerState,
    pub bn: Option<BatchNormState>,
}

/// Forward-pass intermediates kept for the backward pass.
pub struct LutDenseCache {
    pub x: Array2<f64>,
    pub xq: Array3<f64>,
    pub hidden: Array4<f64>,
    pub y_mlp: Array3<f64>,
    pub y_bn: Array3<f64>,
    pub vq: Array3<f64>,
    pub mask: Array2<f64>,
    bn_xhat: Option<Array3<f64>>,
    bn_inv_std: Option<Array2<f64>>,
    training: bool,
}

impl LutDenseLayer {
    pub fn new<R: Rng>(
        c_in: usize,
        c_out: usize,
        hidden: usize,
        activation: Activation,
        batchnorm: bool,
        rng: &mut R,
    ) -> Self {
        assert!(c_in > 0 && c_out > 0 && hidden > 0);
        let n = c_in * c_out;
        // fan-in of the hidden layer is 1, so hidden weights are U(-1, 1);
        // output weights scale with 1/sqrt(hidden). Biases start at zero.
        let out_bound = 1.0 / (hidden as f64).sqrt();
        let w0 = Array3::from_shape_fn((c_in, c_out, hidden), |_| rng.gen_range(-1.0..1.0));
        let w1 = Array3::from_shape_fn((c_in, c_out, hidden), |_| {
            rng.gen_range(-out_bound..out_bound)
        });
        Self {
            c_in,
            c_out,
            hidden,
            activation,
            w0,
            b0: Array3::zeros((c_in, c_out, hidden)),
            w1,
            b1: Array2::zeros((c_in, c_out)),
            q_in: QuantizerState::new(QMode::Wrap, n),
            q_out: QuantizerState::new(QMode::Sat, n),
            bn: if batchnorm { Some(BatchNormState::new(c_in, c_out)) } else { None },
        }
    }

    /// Disable both quantizers (float mode).
    pub fn bypass_quantizers(mut self) -> Self {
        self.q_in.bypass = true;
        self.q_out.bypass = true;
        self
    }

    #[inline]
    pub fn elem(&self, j: usize, i: usize) -> usize {
        j * self.c_out + i
    }

    /// True when the (j, i) table survives width pruning: both quantizers
    /// must have nonzero width (bypassed quantizers never prune).
    pub fn elem_active(&self, j: usize, i: usize) -> bool {
        let e = self.elem(j, i);
        (self.q_in.bypass || self.q_in.width(e) > 0)
            && (self.q_out.bypass || self.q_out.width(e) > 0)
    }

    /// The scalar function one table computes in eval mode:
    /// `q_out(bn_affine(mlp(q_in(x))))`.
    ///
    /// This single code path defines the table semantics; truth-table
    /// extraction and the exact eval forward both call it, so they agree
    /// bit-for-bit by construction. The batch-norm affine is applied by
    /// folding it into the output weights on the fly, so a layer with its
    /// batch-norm explicitly folded computes the identical float sequence.
    pub fn llut_scalar(&self, j: usize, i: usize, x: f64) -> f64 {
        let e = self.elem(j, i);
        let xq = self.q_in.quantize_elem(e, x);
        let (a, b) = match &self.bn {
            Some(bn) => bn.affine(j, i),
            None => (1.0, 0.0),
        };
        let mut acc = 0.0;
        for k in 0..self.hidden {
            let t = self.activation.apply(self.w0[[j, i, k]] * xq + self.b0[[j, i, k]]);
            acc += (a * self.w1[[j, i, k]]) * t;
        }
        let y = acc + (a * self.b1[[j, i]] + b);
        self.q_out.quantize_elem(e, y)
    }

    /// Exact eval-mode forward for one sample.
    pub fn eval_forward_sample(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.c_in {
            return Err(Error::Shape(format!(
                "lut_dense expects {} inputs, got {}",
                self.c_in,
                x.len()
            )));
        }
        self.check_eval_ready()?;
        let mut out = vec![0.0; self.c_out];
        for i in 0..self.c_out {
            let mut acc = 0.0;
            for j in 0..self.c_in {
                if self.elem_active(j, i) {
                    acc += self.llut_scalar(j, i, x[j]);
                }
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn check_eval_ready(&self) -> Result<()> {
        if (!self.q_in.bypass && !self.q_in.calibrated)
            || (!self.q_out.bypass && !self.q_out.calibrated)
        {
            return Err(Error::Quant(
                "uncalibrated quantizer in eval mode; run a training forward first".into(),
            ));
        }
        Ok(())
    }

    /// Batched forward. In training mode this calibrates quantizer ranges,
    /// uses batch statistics for batch-norm and updates its running stats.
    pub fn forward(
        &mut self,
        x: ArrayView2<f64>,
        training: bool,
    ) -> Result<(Array2<f64>, LutDenseCache)> {
        let (batch, c_in) = x.dim();
        if c_in != self.c_in {
            return Err(Error::Shape(format!(
                "lut_dense expects {} inputs, got {}",
                self.c_in, c_in
            )));
        }
        if !training {
            self.check_eval_ready()?;
        }
        let (c_out, h) = (self.c_out, self.hidden);

        if training {
            // Range-calibrate the input quantizers; every element of row j
            // sees the same data column.
            for j in 0..c_in {
                let col = x.column(j);
                let max_abs = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let neg = col.iter().any(|&v| v < 0.0);
                for i in 0..c_out {
                    self.q_in.calibrate_elem(self.elem(j, i), max_abs, neg);
                }
            }
        }

        let mut xq = Array3::zeros((batch, c_in, c_out));
        for b in 0..batch {
            for j in 0..c_in {
                for i in 0..c_out {
                    xq[[b, j, i]] = self.q_in.quantize_elem(self.elem(j, i), x[[b, j]]);
                }
            }
        }

        let mut hidden = Array4::zeros((batch, c_in, c_out, h));
        for b in 0..batch {
            for j in 0..c_in {
                for i in 0..c_out {
                    for k in 0..h {
                        hidden[[b, j, i, k]] = self
                            .activation
                            .apply(self.w0[[j, i, k]] * xq[[b, j, i]] + self.b0[[j, i, k]]);
                    }
                }
            }
        }

        let mut y_mlp = Array3::zeros((batch, c_in, c_out));
        for b in 0..batch {
            for j in 0..c_in {
                for i in 0..c_out {
                    let mut acc = 0.0;
                    for k in 0..h {
                        acc += self.w1[[j, i, k]] * hidden[[b, j, i, k]];
                    }
                    y_mlp[[b, j, i]] = acc + self.b1[[j, i]];
                }
            }
        }

        // Batch-norm over the batch axis, per grid element.
        let mut bn_xhat = None;
        let mut bn_inv_std = None;
        let y_bn = if let Some(bn) = &mut self.bn {
            if training {
                if batch == 0 {
                    return Err(Error::Shape("batch-norm on empty batch".into()));
                }
                let mean = y_mlp.mean_axis(Axis(0)).unwrap();
                let mut var = Array2::<f64>::zeros((c_in, c_out));
                for b in 0..batch {
                    for j in 0..c_in {
                        for i in 0..c_out {
                            let d = y_mlp[[b, j, i]] - mean[[j, i]];
                            var[[j, i]] += d * d;
                        }
                    }
                }
                var.mapv_inplace(|v| v / batch as f64);
                let inv_std = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                let mut xhat = Array3::zeros((batch, c_in, c_out));
                let mut out = Array3::zeros((batch, c_in, c_out));
                for b in 0..batch {
                    for j in 0..c_in {
                        for i in 0..c_out {
                            let xh = (y_mlp[[b, j, i]] - mean[[j, i]]) * inv_std[[j, i]];
                            xhat[[b, j, i]] = xh;
                            out[[b, j, i]] = bn.gamma[[j, i]] * xh + bn.beta[[j, i]];
                        }
                    }
                }
                bn.update_running(&mean, &var);
                bn_xhat = Some(xhat);
                bn_inv_std = Some(inv_std);
                out
            } else {
                let mut out = Array3::zeros((batch, c_in, c_out));
                for b in 0..batch {
                    for j in 0..c_in {
                        for i in 0..c_out {
                            let (a, bb) = bn.affine(j, i);
                            out[[b, j, i]] = a * y_mlp[[b, j, i]] + bb;
                        }
                    }
                }
                out
            }
        } else {
            y_mlp.clone()
        };

        if training {
            for j in 0..c_in {
                for i in 0..c_out {
                    let e = self.elem(j, i);
                    let mut max_abs = 0.0f64;
                    let mut neg = false;
                    for b in 0..batch {
                        let v = y_bn[[b, j, i]];
                        max_abs = max_abs.max(v.abs());
                        neg |= v < 0.0;
                    }
                    self.q_out.calibrate_elem(e, max_abs, neg);
                }
            }
        }

        let mut mask = Array2::zeros((c_in, c_out));
        for j in 0..c_in {
            for i in 0..c_out {
                mask[[j, i]] = if self.elem_active(j, i) { 1.0 } else { 0.0 };
            }
        }

        let mut vq = Array3::zeros((batch, c_in, c_out));
        for b in 0..batch {
            for j in 0..c_in {
                for i in 0..c_out {
                    vq[[b, j, i]] =
                        mask[[j, i]] * self.q_out.quantize_elem(self.elem(j, i), y_bn[[b, j, i]]);
                }
            }
        }

        let out = vq.sum_axis(Axis(1));

        let cache = LutDenseCache {
            x: x.to_owned(),
            xq,
            hidden,
            y_mlp,
            y_bn,
            vq,
            mask,
            bn_xhat,
            bn_inv_std,
            training,
        };
        Ok((out, cache))
    }

    /// Reverse-mode through the whole forward composition. Returns the input
    /// gradient and this layer's parameter gradients in flat order.
    pub fn backward(&self, cache: &LutDenseCache, d_out: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
        let (batch, c_in) = cache.x.dim();
        let (c_out, h) = (self.c_out, self.hidden);

        // d(sum over j) broadcast, through the pruning mask.
        let mut d_vq = Array3::zeros((batch, c_in, c_out));
        for b in 0..batch {
            for j in 0..c_in {
                for i in 0..c_out {
                    d_vq[[b, j, i]] = d_out[[b, i]] * cache.mask[[j, i]];
                }
            }
        }

        // Output quantizer: straight-through with SAT clamp mask, plus the
        // fractional-bit surrogate gradient.
        let mut d_y_bn = Array3::zeros((batch, c_in, c_out));
        let mut g_qout_f = vec![0.0; self.q_out.len()];
        for b in 0..batch {
            for j in 0..c_in {
                for i in 0..c_out {
                    let e = self.elem(j, i);
                    let up = d_vq[[b, j, i]];
                    let y = cache.y_bn[[b, j, i]];
                    d_y_bn[[b, j, i]] = up * self.q_out.grad_mask_elem(e, y);
                    g_qout_f[e] += up * self.q_out.grad_f_raw_elem(e, y);
                }
            }
        }

        // Batch-norm backward.
        let mut g_gamma = Array2::zeros((c_in, c_out));
        let mut g_beta = Array2::zeros((c_in, c_out));
        let d_y_mlp = if let Some(bn) = &self.bn {
            if cache.training {
                let xhat = cache.bn_xhat.as_ref().expect("training cache");
                let inv_std = cache.bn_inv_std.as_ref().expect("training cache");
                let nb = batch as f64;
                let mut sum_dy = Array2::<f64>::zeros((c_in, c_out));
                let mut sum_dy_xhat = Array2::<f64>::zeros((c_in, c_out));
                for b in 0..batch {
                    for j in 0..c_in {
                        for i in 0..c_out {
                            let dy = d_y_bn[[b, j, i]];
                            sum_dy[[j, i]] += dy;
                            sum_dy_xhat[[j, i]] += dy * xhat[[b, j, i]];
                            g_gamma[[j, i]] += dy * xhat[[b, j, i]];
                            g_beta[[j, i]] += dy;
                        }
                    }
                }
                let mut d = Array3::zeros((batch, c_in, c_out));
                for b in 0..batch {
                    for j in 0..c_in {
                        for i in 0..c_out {
                            let t = d_y_bn[[b, j, i]]
                                - sum_dy[[j, i]] / nb
                                - xhat[[b, j, i]] * sum_dy_xhat[[j, i]] / nb;
                            d[[b, j, i]] = bn.gamma[[j, i]] * inv_std[[j, i]] * t;
                        }
                    }
                }
                d
            } else {
                let mut d = Array3::zeros((batch, c_in, c_out));
                for b in 0..batch {
                    for j in 0..c_in {
                        for i in 0..c_out {
                            let (a, _) = bn.affine(j, i);
                            let xh = (cache.y_mlp[[b, j, i]] - bn.running_mean[[j, i]])
                                / (bn.running_var[[j, i]] + bn.eps).sqrt();
                            g_gamma[[j, i]] += d_y_bn[[b, j, i]] * xh;
                            g_beta[[j, i]] += d_y_bn[[b, j, i]];
                            d[[b, j, i]] = a * d_y_bn[[b, j, i]];
                        }
                    }
                }
                d
            }
        } else {
            d_y_bn
        };

        // Output affine of the MLPs.
        let mut g_w1 = Array3::zeros((c_in, c_out, h));
        let mut g_b1 = Array2::zeros((c_in, c_out));
        let mut d_hidden = Array4::zeros((batch, c_in, c_out, h));
        for b in 0..batch {
            for j in 0..c_in {
                for i in 0..c_out {
                    let dy = d_y_mlp[[b, j, i]];
                    g_b1[[j, i]] += dy;
                    for k in 0..h {
                        g_w1[[j, i, k]] += dy * cache.hidden[[b, j, i, k]];
                        d_hidden[[b, j, i, k]] = dy * self.w1[[j, i, k]];
                    }
                }
            }
        }

        // Hidden activation and affine.
        let mut g_w0 = Array3::zeros((c_in, c_out, h));
        let mut g_b0 = Array3::zeros((c_in, c_out, h));
        let mut d_xq = Array3::zeros((batch, c_in, c_out));
        for b in 0..batch {
            for j in 0..c_in {
                for i in 0..c_out {
                    let mut acc = 0.0;
                    for k in 0..h {
                        let d_pre = d_hidden[[b, j, i, k]]
                            * self.activation.grad_from_output(cache.hidden[[b, j, i, k]]);
                        g_w0[[j, i, k]] += d_pre * cache.xq[[b, j, i]];
                        g_b0[[j, i, k]] += d_pre;
                        acc += d_pre * self.w0[[j, i, k]];
                    }
                    d_xq[[b, j, i]] = acc;
                }
            }
        }

        // Input quantizer: WRAP is a pure straight-through.
        let mut g_qin_f = vec![0.0; self.q_in.len()];
        let mut d_x = Array2::zeros((batch, c_in));
        for b in 0..batch {
            for j in 0..c_in {
                let mut acc = 0.0;
                for i in 0..c_out {
                    let e = self.elem(j, i);
                    let up = d_xq[[b, j, i]];
                    g_qin_f[e] += up * self.q_in.grad_f_raw_elem(e, cache.x[[b, j]]);
                    acc += up * self.q_in.grad_mask_elem(e, cache.x[[b, j]]);
                }
                d_x[[b, j]] = acc;
            }
        }

        let mut flat = Vec::with_capacity(self.param_count());
        flat.extend(g_w0.iter());
        flat.extend(g_b0.iter());
        flat.extend(g_w1.iter());
        flat.extend(g_b1.iter());
        if self.bn.is_some() {
            flat.extend(g_gamma.iter());
            flat.extend(g_beta.iter());
        }
        flat.extend(g_qin_f.iter());
        flat.extend(g_qout_f.iter());
        (d_x, flat)
    }

    pub fn param_count(&self) -> usize {
        let grid = self.c_in * self.c_out;
        let mut n = grid * self.hidden * 3 + grid; // w0, b0, w1, b1
        if self.bn.is_some() {
            n += 2 * grid;
        }
        n + 2 * grid // q_in.f_raw, q_out.f_raw
    }

    pub fn get_params(&self, out: &mut Vec<f64>) {
        out.extend(self.w0.iter());
        out.extend(self.b0.iter());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        if let Some(bn) = &self.bn {
            out.extend(bn.gamma.iter());
            out.extend(bn.beta.iter());
        }
        out.extend(self.q_in.f_raw.iter());
        out.extend(self.q_out.f_raw.iter());
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for v in self.w0.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.b0.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.w1.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.b1.iter_mut() {
            *v = it.next().unwrap();
        }
        if let Some(bn) = &mut self.bn {
            for v in bn.gamma.iter_mut() {
                *v = it.next().unwrap();
            }
            for v in bn.beta.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        for v in self.q_in.f_raw.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.q_out.f_raw.iter_mut() {
            *v = it.next().unwrap();
        }
        debug_assert!(it.next().is_none());
    }

    /// EBOPs gradient w.r.t. this layer's flat parameters. Only the
    /// quantizer fractional bits receive nonzero entries. `instances` is the
    /// number of hardware copies of the grid (spatial positions for conv).
    pub fn ebops_grad_flat(&self, spec: &crate::estimate::LutPrimitiveSpec, instances: f64) -> Vec<f64> {
        let grid = self.c_in * self.c_out;
        let mut flat = vec![0.0; self.param_count()];
        let q_in_off = self.param_count() - 2 * grid;
        let q_out_off = self.param_count() - grid;
        for e in 0..grid {
            let m = self.q_in.soft_width(e);
            let n = self.q_out.soft_width(e);
            let (dm, dn) = crate::estimate::ebops_llut_grad(m, n, spec);
            flat[q_in_off + e] = instances * dm * self.q_in.soft_width_grad(e);
            flat[q_out_off + e] = instances * dn * self.q_out.soft_width_grad(e);
        }
        flat
    }

    pub fn ebops_soft(&self, spec: &crate::estimate::LutPrimitiveSpec) -> f64 {
        let mut total = 0.0;
        for e in 0..self.c_in * self.c_out {
            total += crate::estimate::ebops_llut(
                self.q_in.soft_width(e),
                self.q_out.soft_width(e),
                spec,
            );
        }
        total
    }

    pub fn ebops_hard(&self, spec: &crate::estimate::LutPrimitiveSpec) -> f64 {
        let mut total = 0.0;
        for e in 0..self.c_in * self.c_out {
            total += crate::estimate::ebops_llut(
                self.q_in.width(e) as f64,
                self.q_out.width(e) as f64,
                spec,
            );
        }
        total
    }
}
