//! Bit-exact emulation of a compiled program: feed bit patterns in, read
//! bit patterns out, and decode them back to fixed-point values.
//!
//! ```bash
//! cargo run --example emulate_program
//! ```

use lutforge::fxp::from_bits;
use lutforge::io::dataset::TaskKind;
use lutforge::io::synth;
use lutforge::ir::interpret;
use lutforge::layers::{Activation, Layer, LutDenseLayer, Model};
use lutforge::lower::{lower, random_input_vectors, LowerOptions};
use lutforge::rtl::bus_hex;
use lutforge::train::{train, TrainConfig, TrainData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lutforge::Result<()> {
    let (x, y) = synth::two_blobs(500, 1);
    let data = TrainData {
        x_val: x.slice(ndarray::s![..50, ..]).to_owned(),
        y_val: y.slice(ndarray::s![..50]).to_owned(),
        x_train: x.slice(ndarray::s![50.., ..]).to_owned(),
        y_train: y.slice(ndarray::s![50..]).to_owned(),
        task: TaskKind::Classification,
        n_classes: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut model = Model::new(
        vec![4],
        vec![Layer::LutDense(LutDenseLayer::new(4, 2, 2, Activation::Tanh, false, &mut rng))],
    );
    let cfg = TrainConfig {
        beta_start: 1e-6,
        beta_end: 1e-5,
        epochs: 4,
        batch_size: 64,
        seed: 3,
        ..Default::default()
    };
    train(&mut model, &data, &cfg, &Default::default(), None)?;

    let program = lower(&model, &LowerOptions::default())?;
    println!(
        "program: {} instrs, {} inputs, {} outputs",
        program.instrs.len(),
        program.n_inputs(),
        program.n_outputs()
    );

    for (port, fmt) in program.input_formats.iter().enumerate() {
        println!(
            "  in[{port}]: {}bit (signed={}, i={}, f={})",
            fmt.width(),
            fmt.signed,
            fmt.int_bits,
            fmt.frac_bits
        );
    }

    let vectors = random_input_vectors(&program, 5, 99);
    println!("\n{:<14} {:<12} decoded outputs", "stimulus", "response");
    for v in &vectors {
        let out = interpret(&program, v)?;
        let decoded: Vec<f64> = out
            .iter()
            .zip(&program.output_formats)
            .map(|(&bits, &fmt)| from_bits(bits, fmt).unwrap())
            .collect();
        println!(
            "{:<14} {:<12} {:?}",
            bus_hex(v, &program.input_formats),
            bus_hex(&out, &program.output_formats),
            decoded
        );
    }
    Ok(())
}
