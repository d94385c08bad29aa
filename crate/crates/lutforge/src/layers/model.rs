//! Sequential model graph over the layer kinds.

use ndarray::{Array2, ArrayView2};

use super::lut_conv::LutConvCache;
use super::{LutConvLayer, LutDenseLayer, QDenseLayer};
use crate::error::{Error, Result};
use crate::estimate::LutPrimitiveSpec;

#[derive(Debug, Clone)]
pub enum Layer {
    LutDense(LutDenseLayer),
    LutConv(LutConvLayer),
    QDense(QDenseLayer),
    /// Pure reshape to rank 1; emits no hardware.
    Flatten,
}

pub enum LayerCache {
    LutDense(super::LutDenseCache),
    LutConv(LutConvCache),
    QDense(super::qdense::QDenseCache),
    Flatten,
}

/// A sequential chain of layers with a fixed per-sample input shape.
/// Activations flow between layers as flattened feature vectors; the
/// logical shapes are tracked by walking the chain.
#[derive(Debug, Clone)]
pub struct Model {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    pub seed: u64,
    pub config_hash: String,
}

impl Model {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Self {
        Self { input_shape, layers, seed: 0, config_hash: String::new() }
    }

    /// Shapes seen by each layer input, plus the final output shape.
    pub fn shape_walk(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (idx, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().unwrap().clone();
            let next = match layer {
                Layer::LutDense(l) => {
                    if cur != [l.c_in] {
                        return Err(Error::Shape(format!(
                            "layer {idx}: lut_dense wants [{}], got {:?} (flatten first)",
                            l.c_in, cur
                        )));
                    }
                    vec![l.c_out]
                }
                Layer::QDense(l) => {
                    if cur != [l.c_in] {
                        return Err(Error::Shape(format!(
                            "layer {idx}: q_dense wants [{}], got {:?} (flatten first)",
                            l.c_in, cur
                        )));
                    }
                    vec![l.c_out]
                }
                Layer::LutConv(l) => l.out_shape(&cur)?,
                Layer::Flatten => vec![cur.iter().product()],
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_dim(&self) -> Result<usize> {
        Ok(self.shape_walk()?.last().unwrap().iter().product())
    }

    /// Training-mode batched forward; updates calibration and batch-norm
    /// running statistics, and returns per-layer caches for backward.
    pub fn forward_train(
        &mut self,
        x: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Vec<LayerCache>)> {
        let shapes = self.shape_walk()?;
        if x.dim().1 != self.input_dim() {
            return Err(Error::Shape(format!(
                "model input dim {} != {}",
                x.dim().1,
                self.input_dim()
            )));
        }
        let mut cur = x.to_owned();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            let (next, cache) = match layer {
                Layer::LutDense(l) => {
                    let (o, c) = l.forward(cur.view(), true)?;
                    (o, LayerCache::LutDense(c))
                }
                Layer::LutConv(l) => {
                    let (o, c) = l.forward(cur.view(), &shapes[idx], true)?;
                    (o, LayerCache::LutConv(c))
                }
                Layer::QDense(l) => {
                    let (o, c) = l.forward(cur.view(), true)?;
                    (o, LayerCache::QDense(c))
                }
                Layer::Flatten => (cur.clone(), LayerCache::Flatten),
            };
            cur = next;
            caches.push(cache);
        }
        Ok((cur, caches))
    }

    /// Reverse-mode through the chain; returns the loss gradient for every
    /// trainable parameter in flat order (see `get_params`).
    pub fn backward(&self, caches: &[LayerCache], d_out: ArrayView2<f64>) -> Vec<f64> {
        let mut d_cur = d_out.to_owned();
        let mut per_layer: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(caches.iter()).rev() {
            let (d_prev, grads) = match (layer, cache) {
                (Layer::LutDense(l), LayerCache::LutDense(c)) => l.backward(c, d_cur.view()),
                (Layer::LutConv(l), LayerCache::LutConv(c)) => l.backward(c, d_cur.view()),
                (Layer::QDense(l), LayerCache::QDense(c)) => l.backward(c, d_cur.view()),
                (Layer::Flatten, LayerCache::Flatten) => (d_cur.clone(), Vec::new()),
                _ => unreachable!("cache kind mismatch"),
            };
            d_cur = d_prev;
            per_layer.push(grads);
        }
        per_layer.reverse();
        per_layer.into_iter().flatten().collect()
    }

    /// Exact eval-mode forward for one flattened sample. This path defines
    /// the semantics the compiled program must reproduce bit-for-bit.
    pub fn eval_forward_sample(&self, x: &[f64]) -> Result<Vec<f64>> {
        let shapes = self.shape_walk()?;
        let mut cur = x.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::LutDense(l) => l.eval_forward_sample(&cur)?,
                Layer::LutConv(l) => l.eval_forward_sample(&cur, &shapes[idx])?,
                Layer::QDense(l) => l.eval_forward_sample(&cur)?,
                Layer::Flatten => cur,
            };
        }
        Ok(cur)
    }

    pub fn eval_forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let out_dim = self.output_dim()?;
        let mut out = Array2::zeros((x.dim().0, out_dim));
        for (b, row) in x.outer_iter().enumerate() {
            let o = self.eval_forward_sample(row.as_slice().unwrap())?;
            out.row_mut(b).assign(&ndarray::Array1::from_vec(o));
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::LutDense(l) => l.param_count(),
                Layer::LutConv(l) => l.inner.param_count(),
                Layer::QDense(l) => l.param_count(),
                Layer::Flatten => 0,
            })
            .sum()
    }

    pub fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::LutDense(l) => l.get_params(&mut out),
                Layer::LutConv(l) => l.inner.get_params(&mut out),
                Layer::QDense(l) => l.get_params(&mut out),
                Layer::Flatten => {}
            }
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut off = 0;
        for layer in &mut self.layers {
            match layer {
                Layer::LutDense(l) => {
                    let n = l.param_count();
                    l.set_params(&p[off..off + n]);
                    off += n;
                }
                Layer::LutConv(l) => {
                    let n = l.inner.param_count();
                    l.inner.set_params(&p[off..off + n]);
                    off += n;
                }
                Layer::QDense(l) => {
                    let n = l.param_count();
                    l.set_params(&p[off..off + n]);
                    off += n;
                }
                Layer::Flatten => {}
            }
        }
        debug_assert_eq!(off, p.len());
    }

    /// Number of hardware instances of each layer's element grid
    /// (spatial positions for conv, 1 otherwise).
    pub fn layer_instances(&self) -> Result<Vec<usize>> {
        let shapes = self.shape_walk()?;
        self.layers
            .iter()
            .enumerate()
            .map(|(idx, layer)| match layer {
                Layer::LutConv(l) => l.positions(&shapes[idx]),
                _ => Ok(1),
            })
            .collect()
    }

    /// Hard-width resource surrogate (reporting).
    pub fn ebops_hard(&self, spec: &LutPrimitiveSpec) -> Result<f64> {
        let inst = self.layer_instances()?;
        Ok(self
            .layers
            .iter()
            .zip(&inst)
            .map(|(layer, &n)| match layer {
                Layer::LutDense(l) => l.ebops_hard(spec),
                Layer::LutConv(l) => n as f64 * l.inner.ebops_hard(spec),
                Layer::QDense(l) => l.ebops_hard(),
                Layer::Flatten => 0.0,
            })
            .sum())
    }

    /// Continuous resource surrogate (training regularizer).
    pub fn ebops_soft(&self, spec: &LutPrimitiveSpec) -> Result<f64> {
        let inst = self.layer_instances()?;
        Ok(self
            .layers
            .iter()
            .zip(&inst)
            .map(|(layer, &n)| match layer {
                Layer::LutDense(l) => l.ebops_soft(spec),
                Layer::LutConv(l) => n as f64 * l.inner.ebops_soft(spec),
                Layer::QDense(l) => l.ebops_soft(),
                Layer::Flatten => 0.0,
            })
            .sum())
    }

    /// d(ebops_soft)/d(params), aligned with `get_params` order.
    pub fn ebops_grad_flat(&self, spec: &LutPrimitiveSpec) -> Result<Vec<f64>> {
        let inst = self.layer_instances()?;
        let mut out = Vec::with_capacity(self.param_count());
        for (layer, &n) in self.layers.iter().zip(&inst) {
            match layer {
                Layer::LutDense(l) => out.extend(l.ebops_grad_flat(spec, 1.0)),
                Layer::LutConv(l) => out.extend(l.inner.ebops_grad_flat(spec, n as f64)),
                Layer::QDense(l) => out.extend(l.ebops_grad_flat()),
                Layer::Flatten => {}
            }
        }
        Ok(out)
    }
}
