//! Hybrid architecture: a quantized matmul layer extracts features, a
//! LUT-Dense head regresses the target. The whole chain compiles into one
//! program; the scan proves no saturation logic touches any lookup path.
//!
//! ```bash
//! cargo run --release --example hybrid_model
//! ```

use lutforge::io::dataset::TaskKind;
use lutforge::io::synth;
use lutforge::ir::scan_llut_clamp_paths;
use lutforge::layers::{Activation, Layer, LutDenseLayer, Model, QDenseLayer};
use lutforge::lower::{lower_report, verify_bit_exact, LowerOptions};
use lutforge::train::{train, TrainConfig, TrainData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lutforge::Result<()> {
    let (x, y) = synth::synthetic_tracking(1200, 5);
    let data = TrainData {
        x_val: x.slice(ndarray::s![..120, ..]).to_owned(),
        y_val: y.slice(ndarray::s![..120]).to_owned(),
        x_train: x.slice(ndarray::s![120.., ..]).to_owned(),
        y_train: y.slice(ndarray::s![120..]).to_owned(),
        task: TaskKind::Regression,
        n_classes: 1,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut model = Model::new(
        vec![8],
        vec![
            Layer::QDense(QDenseLayer::new(8, 6, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(6, 4, 2, Activation::Tanh, false, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(4, 1, 2, Activation::Tanh, false, &mut rng)),
        ],
    );
    let cfg = TrainConfig {
        beta_start: 1e-6,
        beta_end: 1e-4,
        epochs: 8,
        batch_size: 64,
        lr_base: 0.01,
        seed: 12,
        ..Default::default()
    };
    let result = train(&mut model, &data, &cfg, &Default::default(), None)?;
    println!("final val MSE: {:.5}", result.log.last().unwrap().val_metric);

    let (program, report) = lower_report(&model, &LowerOptions::default())?;
    for l in &report.layers {
        println!("  {:<22} instrs {:>5}  tables {:>4}", l.name, l.instrs, l.tables);
    }
    let clamps = program
        .instrs
        .iter()
        .filter(|i| matches!(i.op, lutforge::ir::Opcode::Clamp { .. }))
        .count();
    println!("CLAMP instructions (matmul activations only): {clamps}");
    let violations = scan_llut_clamp_paths(&program);
    println!("lookup paths carrying saturation logic: {}", violations.len());
    assert!(violations.is_empty());

    let n = verify_bit_exact(&model, &program, 10_000, 77)?;
    println!("bit-exact over {n} vectors");
    Ok(())
}
