//! Train a small LUT network, compile it to the instruction stream, and
//! prove interpreter/model bit-exactness over 10^4 random vectors.
//!
//! ```bash
//! cargo run --release --example compile_and_verify
//! ```

use lutforge::estimate::LutPrimitiveSpec;
use lutforge::io::dataset::TaskKind;
use lutforge::io::synth;
use lutforge::layers::{Activation, Layer, LutDenseLayer, Model};
use lutforge::lower::{lower_report, verify_bit_exact, LowerOptions};
use lutforge::train::{train, TrainConfig, TrainData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lutforge::Result<()> {
    let (x, y) = synth::two_blobs(800, 3);
    let n_val = 80;
    let data = TrainData {
        x_val: x.slice(ndarray::s![..n_val, ..]).to_owned(),
        y_val: y.slice(ndarray::s![..n_val]).to_owned(),
        x_train: x.slice(ndarray::s![n_val.., ..]).to_owned(),
        y_train: y.slice(ndarray::s![n_val..]).to_owned(),
        task: TaskKind::Classification,
        n_classes: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut model = Model::new(
        vec![4],
        vec![
            Layer::LutDense(LutDenseLayer::new(4, 6, 2, Activation::Tanh, false, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(6, 2, 2, Activation::Tanh, false, &mut rng)),
        ],
    );
    let cfg = TrainConfig {
        beta_start: 1e-6,
        beta_end: 1e-4,
        epochs: 6,
        batch_size: 64,
        seed: 4,
        ..Default::default()
    };
    train(&mut model, &data, &cfg, &LutPrimitiveSpec::default(), None)?;

    let (program, report) = lower_report(&model, &LowerOptions::default())?;
    println!("compiled {} instructions, {} tables", program.instrs.len(), program.tables.len());
    for l in &report.layers {
        println!(
            "  {:<24} instrs {:>5}  tables {:>4}  pruned {:>4}  ebops {:>9.1}",
            l.name, l.instrs, l.tables, l.pruned_slots, l.ebops_hard
        );
    }

    let n = verify_bit_exact(&model, &program, 10_000, 12345)?;
    println!("bit-exact over {n} random input vectors");
    Ok(())
}
