//! Resource estimation: per-table LUT cost, the model-level surrogate and
//! its mapping to estimated synthesized LUTs.
//!
//! ```bash
//! cargo run --example estimate_resources
//! ```

use lutforge::estimate::{ebops_llut, estimate_luts, LutPrimitiveSpec};
use lutforge::io::synth;
use lutforge::layers::{Activation, Layer, LutDenseLayer, Model};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lutforge::Result<()> {
    let spec = LutPrimitiveSpec::default();
    println!("per-table cost with LUT-{} primitives splitting into LUT-{}s:", spec.x, spec.y);
    println!("{:>4} {:>6} {:>10}", "m", "n", "ebops");
    for m in [0u32, 3, 5, 6, 8, 10] {
        for n in [1u32, 4, 8] {
            println!("{m:>4} {n:>6} {:>10.3}", ebops_llut(m as f64, n as f64, &spec));
        }
    }

    // a calibrated (untrained) model's hard-width estimate
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = Model::new(
        vec![16],
        vec![
            Layer::LutDense(LutDenseLayer::new(16, 20, 2, Activation::Tanh, true, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(20, 5, 2, Activation::Tanh, false, &mut rng)),
        ],
    );
    let (x, _) = synth::synthetic_jets(512, 0);
    let x: Array2<f64> = x;
    model.forward_train(x.view())?;

    let ebops = model.ebops_hard(&spec)?;
    println!("\nmodel hard EBOPs:    {ebops:.1}");
    println!("estimated LUTs:      {:.1}", estimate_luts(ebops));
    println!("soft (trainable):    {:.1}", model.ebops_soft(&spec)?);
    Ok(())
}
