//! Shared builders for the integration suites: small trained models over
//! deterministic synthetic data.

use lutforge::estimate::LutPrimitiveSpec;
use lutforge::io::dataset::TaskKind;
use lutforge::io::synth;
use lutforge::layers::{Activation, Layer, LutConvLayer, LutDenseLayer, Model, Padding, QDenseLayer};
use lutforge::train::{train, TrainConfig, TrainData, TrainResult};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn quick_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        beta_start: 1e-6,
        beta_end: 1e-4,
        epochs,
        batch_size: 64,
        lr_base: 0.02,
        restart_period: 64,
        restart_mult: 2.0,
        seed,
        ..Default::default()
    }
}

pub fn split_xy(
    x: Array2<f64>,
    y: Array1<f64>,
    task: TaskKind,
    n_classes: usize,
) -> TrainData {
    let n = x.dim().0;
    let n_val = n / 10;
    let x_val = x.slice(ndarray::s![..n_val, ..]).to_owned();
    let y_val = y.slice(ndarray::s![..n_val]).to_owned();
    let x_train = x.slice(ndarray::s![n_val.., ..]).to_owned();
    let y_train = y.slice(ndarray::s![n_val..]).to_owned();
    TrainData { x_train, y_train, x_val, y_val, task, n_classes }
}

fn train_quick(model: &mut Model, data: &TrainData, epochs: usize, seed: u64) -> TrainResult {
    let cfg = quick_cfg(epochs, seed);
    train(model, data, &cfg, &LutPrimitiveSpec::default(), None).expect("training failed")
}

/// LUT-Dense only: 4 -> 8 -> 3 classifier on blob data.
pub fn desk_lut_dense_small() -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (x, yc) = synth::synthetic_jets(600, 5);
    let x4 = x.slice(ndarray::s![.., ..4]).to_owned();
    let y = yc.mapv(|v| if v as usize >= 3 { 0.0 } else { v });
    let mut model = Model::new(
        vec![4],
        vec![
            Layer::LutDense(LutDenseLayer::new(4, 8, 2, Activation::Tanh, false, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(8, 3, 2, Activation::Tanh, false, &mut rng)),
        ],
    );
    let data = split_xy(x4, y, TaskKind::Classification, 3);
    train_quick(&mut model, &data, 3, 11);
    model
}

/// LUT-Dense with fused batch-norm on the first layer: 16 -> 20 -> 5.
pub fn desk_lut_dense_hlf() -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (x, y) = synth::synthetic_jets(900, 6);
    let mut model = Model::new(
        vec![16],
        vec![
            Layer::LutDense(LutDenseLayer::new(16, 20, 2, Activation::Tanh, true, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(20, 5, 2, Activation::Tanh, false, &mut rng)),
        ],
    );
    let data = split_xy(x, y, TaskKind::Classification, 5);
    train_quick(&mut model, &data, 3, 22);
    model
}

/// 1-D LUT-Conv over waveforms, then a LUT-Dense head.
pub fn desk_lut_conv_1d() -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (x, y) = synth::synthetic_waveforms(500, 8, 2, 3, 7);
    let mut model = Model::new(
        vec![8, 2],
        vec![
            Layer::LutConv(LutConvLayer::new(
                vec![3],
                vec![2],
                Padding::Valid,
                2,
                4,
                2,
                Activation::Tanh,
                false,
                &mut rng,
            )),
            Layer::Flatten,
            Layer::LutDense(LutDenseLayer::new(12, 3, 2, Activation::Tanh, false, &mut rng)),
        ],
    );
    let data = split_xy(x, y, TaskKind::Classification, 3);
    train_quick(&mut model, &data, 3, 33);
    model
}

/// 2-D LUT-Conv with same padding, then flatten and a LUT-Dense head.
pub fn desk_lut_conv_2d() -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (x, y) = synth::synthetic_waveforms(400, 16, 1, 2, 13);
    let mut model = Model::new(
        vec![4, 4, 1],
        vec![
            Layer::LutConv(LutConvLayer::new(
                vec![2, 2],
                vec![2, 2],
                Padding::Same,
                1,
                3,
                2,
                Activation::Tanh,
                false,
                &mut rng,
            )),
            Layer::Flatten,
            Layer::LutDense(LutDenseLayer::new(12, 2, 2, Activation::Tanh, false, &mut rng)),
        ],
    );
    let data = split_xy(x, y, TaskKind::Classification, 2);
    train_quick(&mut model, &data, 3, 44);
    model
}

/// Hybrid: matmul feature extraction feeding a LUT-Dense head.
pub fn desk_hybrid() -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (x, y) = synth::synthetic_tracking(700, 3);
    let mut model = Model::new(
        vec![8],
        vec![
            Layer::QDense(QDenseLayer::new(8, 6, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(6, 4, 2, Activation::Tanh, false, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(4, 1, 2, Activation::Tanh, false, &mut rng)),
        ],
    );
    let data = split_xy(x, y, TaskKind::Regression, 1);
    train_quick(&mut model, &data, 3, 55);
    model
}

/// All five desk models with their names.
pub fn desk_corpus() -> Vec<(&'static str, Model)> {
    vec![
        ("lut_dense_small", desk_lut_dense_small()),
        ("lut_dense_hlf", desk_lut_dense_hlf()),
        ("lut_conv_1d", desk_lut_conv_1d()),
        ("lut_conv_2d", desk_lut_conv_2d()),
        ("hybrid", desk_hybrid()),
    ]
}
