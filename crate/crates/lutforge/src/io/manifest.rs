//! Model manifest: one structured-text (JSON) document with base64
//! little-endian blobs for tensors. This is the contract between the
//! trainer and the compiler; save→load→save is byte-identical.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fxp::{FxpFormat, QMode, QuantizerState, Rounding};
use crate::layers::{
    Activation, BatchNormState, Layer, LutConvLayer, LutDenseLayer, Model, Padding, QDenseLayer,
};

pub const MANIFEST_VERSION: u32 = 1;

fn encode_f64s<'a>(vals: impl Iterator<Item = &'a f64>) -> String {
    let mut bytes = Vec::new();
    for v in vals {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_f64s(s: &str, expect: usize) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Format(format!("bad base64 tensor blob: {e}")))?;
    if bytes.len() != expect * 8 {
        return Err(Error::Format(format!(
            "tensor blob holds {} bytes, want {}",
            bytes.len(),
            expect * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizerManifest {
    pub mode: QMode,
    pub rounding: Rounding,
    /// Effective (rounded) fractional bits per element.
    pub f: Vec<i32>,
    pub i_cal: Vec<i32>,
    pub signed: Vec<bool>,
    pub min_f: i32,
    pub max_f: i32,
    pub bypass: bool,
    pub calibrated: bool,
}

impl QuantizerManifest {
    fn from_state(q: &QuantizerState) -> Self {
        Self {
            mode: q.mode,
            rounding: q.rounding,
            f: (0..q.len()).map(|e| q.eff_f(e)).collect(),
            i_cal: q.i_cal.clone(),
            signed: q.signed.clone(),
            min_f: q.min_f,
            max_f: q.max_f,
            bypass: q.bypass,
            calibrated: q.calibrated,
        }
    }

    fn to_state(&self, expect_len: usize) -> Result<QuantizerState> {
        if self.f.len() != expect_len
            || self.i_cal.len() != expect_len
            || self.signed.len() != expect_len
        {
            return Err(Error::Format(format!(
                "quantizer arrays hold {} elements, want {expect_len}",
                self.f.len()
            )));
        }
        Ok(QuantizerState {
            mode: self.mode,
            rounding: self.rounding,
            f_raw: self.f.iter().map(|&f| f as f64).collect(),
            i_cal: self.i_cal.clone(),
            signed: self.signed.clone(),
            min_f: self.min_f,
            max_f: self.max_f,
            bypass: self.bypass,
            calibrated: self.calibrated,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNormManifest {
    pub gamma: String,
    pub beta: String,
    pub running_mean: String,
    pub running_var: String,
    pub momentum: f64,
    pub eps: f64,
    pub populated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LutDenseManifest {
    pub c_in: usize,
    pub c_out: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub w0: String,
    pub b0: String,
    pub w1: String,
    pub b1: String,
    pub q_in: QuantizerManifest,
    pub q_out: QuantizerManifest,
    pub batchnorm: Option<BatchNormManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerManifest {
    #[serde(rename = "lut_dense")]
    LutDense(LutDenseManifest),
    #[serde(rename = "lut_conv")]
    LutConv {
        kernel: Vec<usize>,
        stride: Vec<usize>,
        padding: Padding,
        channels_in: usize,
        inner: LutDenseManifest,
    },
    #[serde(rename = "q_dense")]
    QDense {
        c_in: usize,
        c_out: usize,
        weights: String,
        bias: String,
        q_w: QuantizerManifest,
        q_act: QuantizerManifest,
    },
    #[serde(rename = "flatten")]
    Flatten {},
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub input_shape: Vec<usize>,
    /// Calibrated per-feature wire formats the compiled program will expose.
    pub input_formats: Vec<FxpFormat>,
    pub layers: Vec<LayerManifest>,
}

fn bn_to_manifest(bn: &BatchNormState) -> BatchNormManifest {
    BatchNormManifest {
        gamma: encode_f64s(bn.gamma.iter()),
        beta: encode_f64s(bn.beta.iter()),
        running_mean: encode_f64s(bn.running_mean.iter()),
        running_var: encode_f64s(bn.running_var.iter()),
        momentum: bn.momentum,
        eps: bn.eps,
        populated: bn.populated,
    }
}

fn bn_from_manifest(m: &BatchNormManifest, c_in: usize, c_out: usize) -> Result<BatchNormState> {
    let n = c_in * c_out;
    let arr = |s: &str| -> Result<Array2<f64>> {
        Ok(Array2::from_shape_vec((c_in, c_out), decode_f64s(s, n)?).unwrap())
    };
    Ok(BatchNormState {
        gamma: arr(&m.gamma)?,
        beta: arr(&m.beta)?,
        running_mean: arr(&m.running_mean)?,
        running_var: arr(&m.running_var)?,
        momentum: m.momentum,
        eps: m.eps,
        populated: m.populated,
    })
}

fn lut_dense_to_manifest(l: &LutDenseLayer) -> LutDenseManifest {
    LutDenseManifest {
        c_in: l.c_in,
        c_out: l.c_out,
        hidden: l.hidden,
        activation: l.activation,
        w0: encode_f64s(l.w0.iter()),
        b0: encode_f64s(l.b0.iter()),
        w1: encode_f64s(l.w1.iter()),
        b1: encode_f64s(l.b1.iter()),
        q_in: QuantizerManifest::from_state(&l.q_in),
        q_out: QuantizerManifest::from_state(&l.q_out),
        batchnorm: l.bn.as_ref().map(bn_to_manifest),
    }
}

fn lut_dense_from_manifest(m: &LutDenseManifest) -> Result<LutDenseLayer> {
    let (c_in, c_out, h) = (m.c_in, m.c_out, m.hidden);
    let grid = c_in * c_out;
    let a3 = |s: &str| -> Result<Array3<f64>> {
        Ok(Array3::from_shape_vec((c_in, c_out, h), decode_f64s(s, grid * h)?).unwrap())
    };
    Ok(LutDenseLayer {
        c_in,
        c_out,
        hidden: h,
        activation: m.activation,
        w0: a3(&m.w0)?,
        b0: a3(&m.b0)?,
        w1: a3(&m.w1)?,
        b1: Array2::from_shape_vec((c_in, c_out), decode_f64s(&m.b1, grid)?).unwrap(),
        q_in: m.q_in.to_state(grid)?,
        q_out: m.q_out.to_state(grid)?,
        bn: m.batchnorm.as_ref().map(|b| bn_from_manifest(b, c_in, c_out)).transpose()?,
    })
}

pub fn model_to_manifest(model: &Model) -> Result<ModelManifest> {
    let layers = model
        .layers
        .iter()
        .map(|layer| match layer {
            Layer::LutDense(l) => LayerManifest::LutDense(lut_dense_to_manifest(l)),
            Layer::LutConv(l) => LayerManifest::LutConv {
                kernel: l.kernel.clone(),
                stride: l.stride.clone(),
                padding: l.padding,
                channels_in: l.channels_in,
                inner: lut_dense_to_manifest(&l.inner),
            },
            Layer::QDense(l) => LayerManifest::QDense {
                c_in: l.c_in,
                c_out: l.c_out,
                weights: encode_f64s(l.weights.iter()),
                bias: encode_f64s(l.bias.iter()),
                q_w: QuantizerManifest::from_state(&l.q_w),
                q_act: QuantizerManifest::from_state(&l.q_act),
            },
            Layer::Flatten => LayerManifest::Flatten {},
        })
        .collect();
    let input_formats = crate::lower::model_input_formats(model).unwrap_or_default();
    Ok(ModelManifest {
        format_version: MANIFEST_VERSION,
        seed: model.seed,
        config_hash: model.config_hash.clone(),
        input_shape: model.input_shape.clone(),
        input_formats,
        layers,
    })
}

pub fn model_from_manifest(m: &ModelManifest) -> Result<Model> {
    if m.format_version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest version {}",
            m.format_version
        )));
    }
    let layers = m
        .layers
        .iter()
        .map(|layer| -> Result<Layer> {
            Ok(match layer {
                LayerManifest::LutDense(l) => Layer::LutDense(lut_dense_from_manifest(l)?),
                LayerManifest::LutConv { kernel, stride, padding, channels_in, inner } => {
                    Layer::LutConv(LutConvLayer {
                        kernel: kernel.clone(),
                        stride: stride.clone(),
                        padding: *padding,
                        channels_in: *channels_in,
                        inner: lut_dense_from_manifest(inner)?,
                    })
                }
                LayerManifest::QDense { c_in, c_out, weights, bias, q_w, q_act } => {
                    Layer::QDense(QDenseLayer {
                        c_in: *c_in,
                        c_out: *c_out,
                        weights: Array2::from_shape_vec(
                            (*c_in, *c_out),
                            decode_f64s(weights, c_in * c_out)?,
                        )
                        .unwrap(),
                        bias: Array1::from_vec(decode_f64s(bias, *c_out)?),
                        q_w: q_w.to_state(c_in * c_out)?,
                        q_act: q_act.to_state(*c_in)?,
                    })
                }
                LayerManifest::Flatten {} => Layer::Flatten,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = Model::new(m.input_shape.clone(), layers);
    model.seed = m.seed;
    model.config_hash = m.config_hash.clone();
    Ok(model)
}

pub fn manifest_to_string(m: &ModelManifest) -> Result<String> {
    let mut s = serde_json::to_string_pretty(m)?;
    s.push('\n');
    Ok(s)
}

/// Atomically save a model.
pub fn save_manifest(model: &Model, path: &Path) -> Result<()> {
    let m = model_to_manifest(model)?;
    super::atomic_write(path, manifest_to_string(&m)?.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let m: ModelManifest = serde_json::from_str(&text)?;
    model_from_manifest(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_model() -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = Model::new(
            vec![4],
            vec![
                Layer::QDense(QDenseLayer::new(4, 6, &mut rng)),
                Layer::LutDense(LutDenseLayer::new(
                    6,
                    3,
                    2,
                    Activation::Tanh,
                    true,
                    &mut rng,
                )),
            ],
        );
        let x = ndarray::Array2::from_shape_fn((32, 4), |_| {
            use rand::Rng;
            rng.gen_range(-1.0..1.0)
        });
        model.forward_train(x.view()).unwrap();
        model
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = sample_model();
        let m1 = model_to_manifest(&model).unwrap();
        let s1 = manifest_to_string(&m1).unwrap();
        let model2 = model_from_manifest(&serde_json::from_str(&s1).unwrap()).unwrap();
        let s2 = manifest_to_string(&model_to_manifest(&model2).unwrap()).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn loaded_model_evaluates_identically() {
        let model = sample_model();
        let s = manifest_to_string(&model_to_manifest(&model).unwrap()).unwrap();
        let loaded = model_from_manifest(&serde_json::from_str(&s).unwrap()).unwrap();
        for t in 0..8 {
            let x: Vec<f64> = (0..4).map(|k| (t as f64 * 0.37 + k as f64 * 0.11) % 1.5).collect();
            assert_eq!(
                model.eval_forward_sample(&x).unwrap(),
                loaded.eval_forward_sample(&x).unwrap()
            );
        }
    }

    #[test]
    fn blob_length_mismatch_is_rejected() {
        let model = sample_model();
        let mut m = model_to_manifest(&model).unwrap();
        if let LayerManifest::QDense { weights, .. } = &mut m.layers[0] {
            *weights = B64.encode([0u8; 8]);
        }
        assert!(model_from_manifest(&m).is_err());
    }
}
