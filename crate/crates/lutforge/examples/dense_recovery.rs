//! The lookup grid strictly generalizes an affine layer: with the tables
//! set to `w_ij * relu(x) + b_i / N`, a LUT-Dense layer in float mode
//! reproduces a conventional dense layer exactly.
//!
//! ```bash
//! cargo run --example dense_recovery
//! ```

use lutforge::layers::{Activation, LutDenseLayer};
use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lutforge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (c_in, c_out) = (8, 8);
    let w = Array2::from_shape_fn((c_in, c_out), |_| rng.gen_range(-1.0..1.0));
    let bias: Vec<f64> = (0..c_out).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut layer = LutDenseLayer::new(c_in, c_out, 2, Activation::Relu, false, &mut rng)
        .bypass_quantizers();
    layer.w0 = Array3::from_shape_fn((c_in, c_out, 2), |(_, _, k)| (k == 0) as u8 as f64);
    layer.b0.fill(0.0);
    layer.w1 =
        Array3::from_shape_fn((c_in, c_out, 2), |(j, i, k)| if k == 0 { w[[j, i]] } else { 0.0 });
    for j in 0..c_in {
        for i in 0..c_out {
            layer.b1[[j, i]] = bias[i] / c_in as f64;
        }
    }

    let mut max_err = 0.0f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..c_in).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let got = layer.eval_forward_sample(&x)?;
        for i in 0..c_out {
            let want: f64 =
                (0..c_in).map(|j| w[[j, i]] * x[j].max(0.0)).sum::<f64>() + bias[i];
            max_err = max_err.max((got[i] - want).abs());
        }
    }
    println!("max |lut_dense - reference dense| over 1000 inputs: {max_err:.3e}");
    assert!(max_err < 1e-6);
    println!("the lookup grid recovers the dense layer (float mode)");
    Ok(())
}
