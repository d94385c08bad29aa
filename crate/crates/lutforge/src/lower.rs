//! Frontend compiler: eval-mode model -> truth tables -> instruction
//! stream, including hybrid matmul/LUT chains, plus the bit-exactness
//! verifier that pits the interpreter against the model's exact forward.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimate::{estimate_luts, LutPrimitiveSpec};
use crate::extract::{extract_layer, DEFAULT_MAX_TABLE_BITS};
use crate::fxp::{from_bits, to_bits, FxpFormat, QMode};
use crate::ir::{IrProgram, Opcode, TruthTable};
use crate::layers::{im2col_map_for, Layer, LutDenseLayer, Model, QDenseLayer};

#[derive(Debug, Clone)]
pub struct LowerOptions {
    pub max_table_bits: u32,
    pub spec: LutPrimitiveSpec,
}

impl Default for LowerOptions {
    fn default() -> Self {
        Self { max_table_bits: DEFAULT_MAX_TABLE_BITS, spec: LutPrimitiveSpec::default() }
    }
}

/// Per-layer lowering statistics.
#[derive(Debug, Clone)]
pub struct LayerReport {
    pub name: String,
    pub instrs: usize,
    pub tables: usize,
    pub table_entries: usize,
    /// L-LUT grid slots (c_in * c_out) for LUT layers, 0 otherwise.
    pub grid_slots: usize,
    /// Grid slots without an emitted lookup (width-pruned or zero-folded).
    pub pruned_slots: usize,
    pub ebops_hard: f64,
    pub est_luts: f64,
}

#[derive(Debug, Clone)]
pub struct LowerReport {
    pub layers: Vec<LayerReport>,
    pub total_instrs: usize,
    pub total_ebops: f64,
    pub total_est_luts: f64,
    pub pruning_ratio: f64,
}

struct Builder {
    program: IrProgram,
    fmts: Vec<FxpFormat>,
    slice_cache: HashMap<(usize, FxpFormat), usize>,
    const_cache: HashMap<(i64, FxpFormat), usize>,
}

impl Builder {
    fn new(input_formats: Vec<FxpFormat>) -> Self {
        Self {
            program: IrProgram { input_formats, ..Default::default() },
            fmts: Vec::new(),
            slice_cache: HashMap::new(),
            const_cache: HashMap::new(),
        }
    }

    fn push(&mut self, op: Opcode) -> usize {
        let fmt = self.program.result_fmt(&op, |w| self.fmts[w]);
        self.program.instrs.push(op.into());
        self.fmts.push(fmt);
        self.program.instrs.len() - 1
    }

    /// WRAP requantize, one per (wire, format), shared by every consumer.
    fn slice(&mut self, wire: usize, fmt: FxpFormat) -> usize {
        if let Some(&w) = self.slice_cache.get(&(wire, fmt)) {
            return w;
        }
        let w = self.push(Opcode::Bitslice { a: wire, fmt });
        self.slice_cache.insert((wire, fmt), w);
        w
    }

    fn constant(&mut self, value: i64, fmt: FxpFormat) -> usize {
        if let Some(&w) = self.const_cache.get(&(value, fmt)) {
            return w;
        }
        let w = self.push(Opcode::Const { value, fmt });
        self.const_cache.insert((value, fmt), w);
        w
    }

    fn const_zero(&mut self) -> usize {
        self.constant(0, FxpFormat::new(false, 1, 0))
    }

    /// Balanced binary reduction, ties broken left-to-right.
    fn adder_tree(&mut self, mut wires: Vec<usize>) -> Option<usize> {
        if wires.is_empty() {
            return None;
        }
        while wires.len() > 1 {
            let mut next = Vec::with_capacity(wires.len().div_ceil(2));
            for pair in wires.chunks(2) {
                if pair.len() == 2 {
                    next.push(self.push(Opcode::Add { a: pair[0], b: pair[1] }));
                } else {
                    next.push(pair[0]);
                }
            }
            wires = next;
        }
        Some(wires[0])
    }
}

/// Minimal format that represents the exact dyadic value `v` at `frac_bits`.
fn fmt_for_value(v: f64, frac_bits: i32) -> Result<(i64, FxpFormat)> {
    let scaled = v * (frac_bits as f64).exp2();
    if scaled.fract() != 0.0 || scaled.abs() > (1u64 << 62) as f64 {
        return Err(Error::Lower(format!("{v} is not exact at {frac_bits} fractional bits")));
    }
    let mantissa = scaled as i64;
    let signed = mantissa < 0;
    let mut int_bits = frac_bits.checked_neg().unwrap_or(0).max(-256);
    // grow until the mantissa fits
    loop {
        let fmt = FxpFormat::new(signed, int_bits, frac_bits);
        let (lo, hi) = fmt.mantissa_range();
        if fmt.width() > 0 && mantissa >= lo && mantissa <= hi {
            return Ok((mantissa, fmt));
        }
        int_bits += 1;
        if int_bits > 80 {
            return Err(Error::Lower(format!("{v} needs more than 64 bits")));
        }
    }
}

/// Per-feature input formats the compiled program exposes: the envelope of
/// every quantizer that will slice the feature. Unused features get a 1-bit
/// placeholder.
pub fn model_input_formats(model: &Model) -> Result<Vec<FxpFormat>> {
    let n = model.input_dim();
    let mut envelopes: Vec<Option<FxpFormat>> = vec![None; n];
    let fold = |slot: &mut Option<FxpFormat>, fmt: FxpFormat| {
        *slot = Some(match slot.take() {
            None => fmt,
            Some(cur) => FxpFormat::new(
                cur.signed || fmt.signed,
                cur.int_bits.max(fmt.int_bits),
                cur.frac_bits.max(fmt.frac_bits),
            ),
        });
    };

    // Find the first compute layer (flattens are transparent).
    let mut first = None;
    for layer in &model.layers {
        match layer {
            Layer::Flatten => continue,
            other => {
                first = Some(other);
                break;
            }
        }
    }
    match first {
        None => return Err(Error::Config("model has no layers".into())),
        Some(Layer::LutDense(l)) => {
            for j in 0..l.c_in {
                for i in 0..l.c_out {
                    let e = l.elem(j, i);
                    if l.q_in.width(e) > 0 && l.q_out.width(e) > 0 {
                        fold(&mut envelopes[j], l.q_in.format(e));
                    }
                }
            }
        }
        Some(Layer::QDense(l)) => {
            for k in 0..l.c_in {
                if l.q_act.width(k) > 0 {
                    fold(&mut envelopes[k], l.q_act.format(k));
                }
            }
        }
        Some(Layer::LutConv(l)) => {
            let c = l.channels_in;
            let inner = &l.inner;
            for t in 0..inner.c_in {
                let ch = t % c;
                for i in 0..inner.c_out {
                    let e = inner.elem(t, i);
                    if inner.q_in.width(e) > 0 && inner.q_out.width(e) > 0 {
                        // every feature of this channel may feed slot t
                        for feat in (ch..n).step_by(c) {
                            fold(&mut envelopes[feat], inner.q_in.format(e));
                        }
                    }
                }
            }
        }
        Some(Layer::Flatten) => unreachable!(),
    }
    Ok(envelopes
        .into_iter()
        .map(|e| e.unwrap_or(FxpFormat::new(false, 1, 0)))
        .collect())
}

fn lower_lut_grid(
    b: &mut Builder,
    layer: &LutDenseLayer,
    in_wires: &[usize],
    table_ids: &[Vec<Option<usize>>],
) -> Vec<usize> {
    let mut outs = Vec::with_capacity(layer.c_out);
    for i in 0..layer.c_out {
        let mut terms = Vec::new();
        for (j, &wire) in in_wires.iter().enumerate() {
            if let Some(tid) = table_ids[j][i] {
                let fmt = b.program.tables[tid].in_fmt;
                let sliced = b.slice(wire, fmt);
                terms.push(b.push(Opcode::Llut { a: sliced, table: tid }));
            }
        }
        let out = match b.adder_tree(terms) {
            Some(w) => w,
            None => b.const_zero(),
        };
        outs.push(out);
    }
    outs
}

fn register_tables(
    b: &mut Builder,
    grid: Vec<Vec<Option<TruthTable>>>,
) -> (Vec<Vec<Option<usize>>>, usize, usize) {
    let mut ids = Vec::with_capacity(grid.len());
    let (mut count, mut entries) = (0, 0);
    for row in grid {
        let mut id_row = Vec::with_capacity(row.len());
        for slot in row {
            id_row.push(slot.map(|t| {
                count += 1;
                entries += t.entries.len();
                b.program.tables.push(t);
                b.program.tables.len() - 1
            }));
        }
        ids.push(id_row);
    }
    (ids, count, entries)
}

fn lower_qdense(b: &mut Builder, layer: &QDenseLayer, in_wires: &[usize]) -> Result<Vec<usize>> {
    // one requantize per input channel; SAT costs a clamp, WRAP is a slice
    let mut xq_wires: Vec<Option<usize>> = Vec::with_capacity(layer.c_in);
    for (k, &wire) in in_wires.iter().enumerate() {
        if layer.q_act.width(k) == 0 {
            xq_wires.push(None);
            continue;
        }
        let fmt = layer.q_act.format(k);
        let w = match layer.q_act.mode {
            QMode::Sat => b.push(Opcode::Clamp { a: wire, fmt }),
            QMode::Wrap => b.slice(wire, fmt),
        };
        xq_wires.push(Some(w));
    }
    let mut outs = Vec::with_capacity(layer.c_out);
    for l in 0..layer.c_out {
        let mut terms = Vec::new();
        for k in 0..layer.c_in {
            let Some(xw) = xq_wires[k] else { continue };
            let e = k * layer.c_out + l;
            if layer.q_w.width(e) == 0 {
                continue;
            }
            let wq = layer.weight_fixed(k, l);
            if wq == 0.0 {
                continue;
            }
            let (mantissa, fmt) = fmt_for_value(wq, layer.q_w.eff_f(e))?;
            terms.push(b.push(Opcode::MulConst { a: xw, value: mantissa, fmt }));
        }
        let bias = layer.bias_fixed(l);
        if bias != 0.0 {
            let (mantissa, fmt) = fmt_for_value(bias, layer.acc_frac_bits(l))?;
            terms.push(b.constant(mantissa, fmt));
        }
        let out = match b.adder_tree(terms) {
            Some(w) => w,
            None => b.const_zero(),
        };
        outs.push(out);
    }
    Ok(outs)
}

/// Compile an eval-mode model into a validated program.
pub fn lower(model: &Model, opts: &LowerOptions) -> Result<IrProgram> {
    Ok(lower_report(model, opts)?.0)
}

/// Compile and report per-layer statistics.
pub fn lower_report(model: &Model, opts: &LowerOptions) -> Result<(IrProgram, LowerReport)> {
    let shapes = model.shape_walk()?;
    let input_formats = model_input_formats(model)?;
    let mut b = Builder::new(input_formats);
    let mut reports: Vec<LayerReport> = Vec::new();

    let mut wires: Vec<usize> =
        (0..model.input_dim()).map(|port| b.push(Opcode::Input { port })).collect();
    reports.push(LayerReport {
        name: "inputs".into(),
        instrs: b.program.instrs.len(),
        tables: 0,
        table_entries: 0,
        grid_slots: 0,
        pruned_slots: 0,
        ebops_hard: 0.0,
        est_luts: 0.0,
    });

    let instances = model.layer_instances()?;
    for (idx, layer) in model.layers.iter().enumerate() {
        let start = b.program.instrs.len();
        let mut tables = 0;
        let mut table_entries = 0;
        let mut grid_slots = 0;
        let mut pruned_slots = 0;
        let mut ebops = 0.0;
        let name;
        match layer {
            Layer::Flatten => {
                name = format!("{idx}:flatten");
            }
            Layer::LutDense(l) => {
                name = format!("{idx}:lut_dense {}x{}", l.c_in, l.c_out);
                let grid = extract_layer(l, opts.max_table_bits)?;
                let (ids, n_tables, n_entries) = register_tables(&mut b, grid);
                tables = n_tables;
                table_entries = n_entries;
                grid_slots = l.c_in * l.c_out;
                pruned_slots = grid_slots - n_tables;
                ebops = l.ebops_hard(&opts.spec);
                wires = lower_lut_grid(&mut b, l, &wires, &ids);
            }
            Layer::LutConv(l) => {
                name = format!(
                    "{idx}:lut_conv k{:?} {}ch x{}",
                    l.kernel, l.channels_in, l.inner.c_out
                );
                let grid = extract_layer(&l.inner, opts.max_table_bits)?;
                let (ids, n_tables, n_entries) = register_tables(&mut b, grid);
                tables = n_tables;
                table_entries = n_entries;
                grid_slots = l.inner.c_in * l.inner.c_out;
                pruned_slots = grid_slots - n_tables;
                ebops = instances[idx] as f64 * l.inner.ebops_hard(&opts.spec);
                let in_shape = &shapes[idx];
                let (spatial, _) = in_shape.split_at(in_shape.len() - 1);
                let (_, map) = im2col_map_for(l, spatial)?;
                let mut out_wires = Vec::new();
                for entries in &map {
                    let patch: Vec<usize> = entries
                        .iter()
                        .map(|src| match src {
                            Some(s) => wires[*s],
                            None => b.const_zero(),
                        })
                        .collect();
                    out_wires.extend(lower_lut_grid(&mut b, &l.inner, &patch, &ids));
                }
                wires = out_wires;
            }
            Layer::QDense(l) => {
                name = format!("{idx}:q_dense {}x{}", l.c_in, l.c_out);
                l.check_eval_ready()?;
                if l.q_act.bypass || l.q_w.bypass {
                    return Err(Error::Lower(
                        "cannot lower a layer with bypassed quantizers".into(),
                    ));
                }
                ebops = l.ebops_hard();
                wires = lower_qdense(&mut b, l, &wires)?;
            }
        }
        reports.push(LayerReport {
            name,
            instrs: b.program.instrs.len() - start,
            tables,
            table_entries,
            grid_slots,
            pruned_slots,
            ebops_hard: ebops,
            est_luts: estimate_luts(ebops),
        });
    }

    let start = b.program.instrs.len();
    for (port, &w) in wires.iter().enumerate() {
        let fmt = b.fmts[w];
        b.program.output_formats.push(fmt);
        b.push(Opcode::Output { a: w, port });
    }
    reports.push(LayerReport {
        name: "outputs".into(),
        instrs: b.program.instrs.len() - start,
        tables: 0,
        table_entries: 0,
        grid_slots: 0,
        pruned_slots: 0,
        ebops_hard: 0.0,
        est_luts: 0.0,
    });

    let program = b.program;
    program.validate_ok()?;

    let total_ebops = model.ebops_hard(&opts.spec)?;
    let grid_total: usize = reports.iter().map(|r| r.grid_slots).sum();
    let pruned_total: usize = reports.iter().map(|r| r.pruned_slots).sum();
    let report = LowerReport {
        total_instrs: program.instrs.len(),
        total_ebops,
        total_est_luts: estimate_luts(total_ebops),
        pruning_ratio: if grid_total > 0 {
            pruned_total as f64 / grid_total as f64
        } else {
            0.0
        },
        layers: reports,
    };
    Ok((program, report))
}

/// Draw `n` input vectors uniformly over the representable values of the
/// program's input formats.
pub fn random_input_vectors(p: &IrProgram, n: usize, seed: u64) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            p.input_formats
                .iter()
                .map(|fmt| {
                    let w = fmt.width();
                    if w == 0 {
                        0
                    } else if w == 64 {
                        rng.gen::<u64>()
                    } else {
                        rng.gen_range(0..(1u64 << w))
                    }
                })
                .collect()
        })
        .collect()
}

/// Interpret the program on every vector and compare bit-for-bit against
/// the model's exact eval-mode forward. Returns the vector count on
/// success; the first mismatch is an `Error::Verify`.
pub fn verify_bit_exact(
    model: &Model,
    program: &IrProgram,
    n_vectors: usize,
    seed: u64,
) -> Result<usize> {
    program.validate_ok()?;
    let vectors = random_input_vectors(program, n_vectors, seed);
    let got = crate::ir::interpret_batch(program, &vectors)?;
    for (v, (inputs, outputs)) in vectors.iter().zip(got.iter()).enumerate() {
        let values: Vec<f64> = inputs
            .iter()
            .zip(&program.input_formats)
            .map(|(&b, &fmt)| from_bits(b, fmt))
            .collect::<Result<_>>()?;
        let expect = model.eval_forward_sample(&values)?;
        for (port, (&got_bits, &val)) in outputs.iter().zip(expect.iter()).enumerate() {
            let expect_bits = to_bits(val, program.output_formats[port]).map_err(|e| {
                Error::Lower(format!("model output not representable on port {port}: {e}"))
            })?;
            if got_bits != expect_bits {
                return Err(Error::Verify {
                    vector: v,
                    port,
                    got: got_bits,
                    expected: expect_bits,
                });
            }
        }
    }
    Ok(n_vectors)
}
