//! End-to-end pipeline checks: train, lower, interpret, serialize.

mod common;

use lutforge::extract::extract_layer;
use lutforge::ir::{program_from_bytes, program_to_bytes, scan_llut_clamp_paths, Opcode};
use lutforge::layers::{Layer, Model};
use lutforge::lower::{lower, lower_report, verify_bit_exact, LowerOptions};

fn lut_grid_bits_ok(model: &Model) {
    for layer in &model.layers {
        if let Layer::LutDense(l) = layer {
            let grid = extract_layer(l, 16).expect("extract");
            assert_eq!(grid.len(), l.c_in);
            assert_eq!(grid[0].len(), l.c_out);
        }
    }
}

#[test]
fn small_dense_model_is_bit_exact() {
    let model = common::desk_lut_dense_small();
    lut_grid_bits_ok(&model);
    let program = lower(&model, &LowerOptions::default()).expect("lower");
    program.validate_ok().unwrap();
    verify_bit_exact(&model, &program, 2000, 42).expect("bit-exact");
}

#[test]
fn conv_model_is_bit_exact() {
    let model = common::desk_lut_conv_1d();
    let program = lower(&model, &LowerOptions::default()).expect("lower");
    verify_bit_exact(&model, &program, 1000, 7).expect("bit-exact");
}

#[test]
fn hybrid_model_is_bit_exact_and_clamp_paths_are_clean() {
    let model = common::desk_hybrid();
    let program = lower(&model, &LowerOptions::default()).expect("lower");
    assert!(
        program.instrs.iter().any(|i| matches!(i.op, Opcode::Clamp { .. })),
        "hybrid model should quantize matmul activations with CLAMP"
    );
    assert!(scan_llut_clamp_paths(&program).is_empty());
    verify_bit_exact(&model, &program, 1000, 9).expect("bit-exact");
}

#[test]
fn lowering_is_deterministic_bytes() {
    let model = common::desk_lut_dense_small();
    let p1 = lower(&model, &LowerOptions::default()).unwrap();
    let p2 = lower(&model, &LowerOptions::default()).unwrap();
    assert_eq!(program_to_bytes(&p1).unwrap(), program_to_bytes(&p2).unwrap());
}

#[test]
fn program_file_roundtrip_preserves_semantics() {
    let model = common::desk_lut_dense_small();
    let program = lower(&model, &LowerOptions::default()).unwrap();
    let bytes = program_to_bytes(&program).unwrap();
    let loaded = program_from_bytes(&bytes).unwrap();
    verify_bit_exact(&model, &loaded, 500, 3).expect("loaded program still bit-exact");
}

#[test]
fn report_counts_sum_to_program_length() {
    let model = common::desk_lut_dense_hlf();
    let (program, report) = lower_report(&model, &LowerOptions::default()).unwrap();
    let sum: usize = report.layers.iter().map(|l| l.instrs).sum();
    assert_eq!(sum, program.instrs.len());
    assert_eq!(report.total_instrs, program.instrs.len());
    let spec = lutforge::estimate::LutPrimitiveSpec::default();
    assert_eq!(report.total_ebops, model.ebops_hard(&spec).unwrap());
}

#[test]
fn fully_pruned_model_lowers_to_io_and_constants_only() {
    let mut model = common::desk_lut_dense_small();
    for layer in &mut model.layers {
        if let Layer::LutDense(l) = layer {
            for e in 0..l.q_out.len() {
                l.q_out.prune_elem(e);
            }
        }
    }
    let program = lower(&model, &LowerOptions::default()).unwrap();
    for instr in &program.instrs {
        assert!(
            matches!(
                instr.op,
                Opcode::Input { .. } | Opcode::Const { value: 0, .. } | Opcode::Output { .. }
            ),
            "unexpected instruction in a fully pruned program: {:?}",
            instr.op
        );
    }
    verify_bit_exact(&model, &program, 200, 1).unwrap();
}

#[test]
fn one_by_one_grid_lowers_to_a_single_chain() {
    use lutforge::layers::{Activation, LutDenseLayer};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut layer = LutDenseLayer::new(1, 1, 2, Activation::Tanh, false, &mut rng);
    layer.q_in.f_raw.fill(3.0);
    layer.q_out.f_raw.fill(3.0);
    let x = ndarray::Array2::from_shape_fn((32, 1), |_| {
        use rand::Rng;
        rng.gen_range(-1.0..1.0)
    });
    layer.forward(x.view(), true).unwrap();
    let model = Model::new(vec![1], vec![Layer::LutDense(layer)]);
    let program = lower(&model, &LowerOptions::default()).unwrap();
    let ops: Vec<&'static str> =
        program.instrs.iter().map(|i| lutforge::ir::opcode_name(&i.op)).collect();
    assert_eq!(ops, vec!["INPUT", "BITSLICE", "LLUT", "OUTPUT"]);
}

#[test]
fn batch_interpretation_is_self_consistent_and_range_sound() {
    let model = common::desk_lut_dense_small();
    let program = lower(&model, &LowerOptions::default()).unwrap();
    let vectors = lutforge::lower::random_input_vectors(&program, 10_000, 77);
    let batch = lutforge::ir::interpret_batch(&program, &vectors).unwrap();
    let opts = lutforge::ir::InterpOptions { check_ranges: true };
    for (v, out) in vectors.iter().zip(&batch).step_by(37) {
        let single = lutforge::ir::interpret_with(&program, v, opts).unwrap();
        assert_eq!(&single, out);
    }
    // every runtime value fits its wire format on a full checked pass
    for v in vectors.iter().take(500) {
        lutforge::ir::interpret_with(&program, v, opts).unwrap();
    }
}

#[test]
fn untouched_init_pruning_ratio_equals_zero_width_fraction() {
    use lutforge::layers::{Activation, LutDenseLayer};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let mut layer = LutDenseLayer::new(6, 6, 2, Activation::Tanh, false, &mut rng);
    let x = ndarray::Array2::from_shape_fn((64, 6), |_| {
        use rand::Rng;
        rng.gen_range(-2.0..2.0)
    });
    layer.forward(x.view(), true).unwrap();
    // force a few zero-width output quantizers
    for e in [0usize, 7, 14] {
        layer.q_out.prune_elem(e);
    }
    let zero_width = (0..layer.q_out.len())
        .filter(|&e| layer.q_in.width(e) == 0 || layer.q_out.width(e) == 0)
        .count();
    let model = Model::new(vec![6], vec![Layer::LutDense(layer)]);
    let (_, report) = lower_report(&model, &LowerOptions::default()).unwrap();
    assert_eq!(report.pruning_ratio, zero_width as f64 / 36.0);
}

#[test]
fn manifest_roundtrip_compiles_to_identical_bytes() {
    let model = common::desk_lut_dense_small();
    let manifest = lutforge::io::manifest::model_to_manifest(&model).unwrap();
    let text = lutforge::io::manifest::manifest_to_string(&manifest).unwrap();
    let loaded =
        lutforge::io::manifest::model_from_manifest(&serde_json::from_str(&text).unwrap())
            .unwrap();
    let p1 = lower(&model, &LowerOptions::default()).unwrap();
    let p2 = lower(&loaded, &LowerOptions::default()).unwrap();
    assert_eq!(program_to_bytes(&p1).unwrap(), program_to_bytes(&p2).unwrap());
}
