//! Emit synthesizable Verilog plus a self-checking testbench for a trained
//! model, with interpreter-generated stimulus/expected vector files.
//!
//! ```bash
//! cargo run --example emit_rtl
//! ```

use lutforge::io::dataset::TaskKind;
use lutforge::io::synth;
use lutforge::layers::{Activation, Layer, LutDenseLayer, Model};
use lutforge::lower::{lower, LowerOptions};
use lutforge::rtl::{write_rtl_dir, EmitOptions};
use lutforge::train::{train, TrainConfig, TrainData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lutforge::Result<()> {
    let (x, y) = synth::two_blobs(400, 8);
    let data = TrainData {
        x_val: x.slice(ndarray::s![..40, ..]).to_owned(),
        y_val: y.slice(ndarray::s![..40]).to_owned(),
        x_train: x.slice(ndarray::s![40.., ..]).to_owned(),
        y_train: y.slice(ndarray::s![40..]).to_owned(),
        task: TaskKind::Classification,
        n_classes: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut model = Model::new(
        vec![4],
        vec![Layer::LutDense(LutDenseLayer::new(4, 2, 2, Activation::Tanh, false, &mut rng))],
    );
    let cfg = TrainConfig {
        beta_start: 1e-6,
        beta_end: 1e-5,
        epochs: 3,
        batch_size: 64,
        seed: 6,
        ..Default::default()
    };
    train(&mut model, &data, &cfg, &Default::default(), None)?;
    let program = lower(&model, &LowerOptions::default())?;

    let dir = std::env::temp_dir().join("lutforge_rtl_demo");
    let opts = EmitOptions { stage_depth: 4, ..Default::default() };
    let rtl = write_rtl_dir(&program, &opts, 128, 7, &dir)?;
    println!("wrote RTL tree to {}", dir.display());
    println!("  top.v        ({} stages, latency {} cycles)", rtl.stages, rtl.latency);
    println!("  tb_top.v     (self-checking, exits nonzero on mismatch)");
    println!("  stimuli.hex / expected.hex (128 interpreter-generated vectors)");
    println!("  latency.txt");
    println!("\nsimulate with e.g.:");
    println!("  cd {} && iverilog -o tb tb_top.v top.v && vvp tb", dir.display());
    Ok(())
}
