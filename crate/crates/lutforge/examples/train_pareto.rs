//! Train a 16 -> 20 -> 5 LUT-Dense classifier on the synthetic jet set with
//! an exponential resource-pressure sweep, then print the Pareto frontier.
//!
//! ```bash
//! cargo run --release --example train_pareto
//! ```

use lutforge::estimate::LutPrimitiveSpec;
use lutforge::io::dataset::TaskKind;
use lutforge::io::synth;
use lutforge::layers::{Activation, Layer, LutDenseLayer, Model};
use lutforge::train::{train, TrainConfig, TrainData};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lutforge::Result<()> {
    let (x, y) = synth::synthetic_jets(3000, 7);
    let n_val = x.dim().0 / 10;
    let data = TrainData {
        x_val: x.slice(ndarray::s![..n_val, ..]).to_owned(),
        y_val: y.slice(ndarray::s![..n_val]).to_owned(),
        x_train: x.slice(ndarray::s![n_val.., ..]).to_owned(),
        y_train: y.slice(ndarray::s![n_val..]).to_owned(),
        task: TaskKind::Classification,
        n_classes: 5,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = Model::new(
        vec![16],
        vec![
            Layer::LutDense(LutDenseLayer::new(16, 20, 2, Activation::Tanh, true, &mut rng)),
            Layer::LutDense(LutDenseLayer::new(20, 5, 2, Activation::Tanh, false, &mut rng)),
        ],
    );

    let cfg = TrainConfig {
        beta_start: 5e-7,
        beta_end: 1e-3,
        epochs: 22,
        batch_size: 128,
        lr_base: 0.02,
        restart_period: 128,
        restart_mult: 2.0,
        seed: 42,
        ..Default::default()
    };
    let spec = LutPrimitiveSpec::default();
    let result = train(&mut model, &data, &cfg, &spec, None)?;

    println!("epoch  beta        lr        train_loss  val_acc  ebops");
    for e in &result.log {
        println!(
            "{:>5}  {:>9.3e}  {:>8.5}  {:>10.4}  {:>7.4}  {:>10.0}",
            e.epoch, e.beta, e.lr, e.train_loss, e.val_metric, e.ebops
        );
    }
    println!("\npareto frontier ({} points):", result.pareto.points.len());
    for p in &result.pareto.points {
        println!("  ebops {:>10.0}  val_acc {:.4}  [{}]", p.ebops, p.val_metric, p.checkpoint_id);
    }
    Ok(())
}
