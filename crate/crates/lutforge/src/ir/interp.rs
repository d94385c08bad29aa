//! Bit-exact interpreter over the instruction stream.
//!
//! Values travel as exact integer mantissas tagged by their wire format;
//! arithmetic is performed in 128-bit intermediates so every operation on
//! wires of up to 64 bits is exact.

use super::{operand_wires, IrProgram, Opcode, MAX_WIRE_BITS};
use crate::error::{Error, Result};
use crate::fxp::FxpFormat;

#[derive(Debug, Clone, Copy)]
pub struct InterpOptions {
    /// Assert that every runtime value fits its wire's format.
    pub check_ranges: bool,
}

impl Default for InterpOptions {
    fn default() -> Self {
        Self { check_ranges: false }
    }
}

fn fault(index: usize, message: impl Into<String>) -> Error {
    Error::Interp { index, message: message.into() }
}

fn mask_bits(w: u32) -> u128 {
    if w >= 128 {
        u128::MAX
    } else {
        (1u128 << w) - 1
    }
}

/// Wrap a mantissa into the two's-complement (or unsigned) window of `fmt`.
fn wrap_into(m: i128, fmt: FxpFormat) -> i128 {
    let w = fmt.width();
    if w == 0 {
        return 0;
    }
    let r = (m as u128) & mask_bits(w);
    if fmt.signed && w < 128 && (r >> (w - 1)) & 1 == 1 {
        r as i128 - (1i128 << w)
    } else {
        r as i128
    }
}

/// Arithmetic shift right by up to huge amounts (floor semantics).
fn asr(m: i128, k: u32) -> i128 {
    if k >= 127 {
        if m < 0 {
            -1
        } else {
            0
        }
    } else {
        m >> k
    }
}

/// Round-half-away-from-zero division by `2^k`.
fn div_pow2_rnd(m: i128, k: u32) -> i128 {
    if k == 0 {
        return m;
    }
    if k >= 127 {
        return 0;
    }
    let d = 1i128 << k;
    let half = d >> 1;
    if m >= 0 {
        (m + half) >> k
    } else {
        -((-m + half) >> k)
    }
}

fn align(m: i128, from_f: i32, to_f: i32, index: usize) -> Result<i128> {
    let shift = to_f as i64 - from_f as i64;
    if shift.abs() > 100 {
        return Err(fault(index, format!("alignment shift {shift} out of range")));
    }
    if shift >= 0 {
        m.checked_shl(shift as u32)
            .ok_or_else(|| fault(index, "alignment overflow"))
    } else {
        Ok(asr(m, (-shift) as u32))
    }
}

fn decode_input(bits: u64, fmt: FxpFormat, index: usize) -> Result<i128> {
    let w = fmt.width();
    if w == 0 {
        if bits != 0 {
            return Err(fault(index, "nonzero bits on width-0 input"));
        }
        return Ok(0);
    }
    if w < 64 && bits >> w != 0 {
        return Err(fault(index, format!("input bits {bits:#x} wider than {w}-bit port")));
    }
    Ok(wrap_into(bits as i128, fmt))
}

/// Execute the program on one input vector of port bit patterns; returns
/// one bit pattern per output port.
pub fn interpret(p: &IrProgram, inputs: &[u64]) -> Result<Vec<u64>> {
    interpret_with(p, inputs, InterpOptions::default())
}

pub fn interpret_with(p: &IrProgram, inputs: &[u64], opts: InterpOptions) -> Result<Vec<u64>> {
    if inputs.len() != p.n_inputs() {
        return Err(Error::Shape(format!(
            "program wants {} inputs, got {}",
            p.n_inputs(),
            inputs.len()
        )));
    }
    let fmts = p
        .wire_formats()
        .map_err(|d| Error::Ir { index: d.index, message: d.message })?;
    let mut values: Vec<i128> = Vec::with_capacity(p.instrs.len());
    let mut outputs = vec![0u64; p.n_outputs()];

    for (idx, instr) in p.instrs.iter().enumerate() {
        let fmt = fmts[idx];
        if fmt.width() > MAX_WIRE_BITS {
            return Err(fault(idx, format!("wire width {} exceeds 64 bits", fmt.width())));
        }
        let v = match instr.op {
            Opcode::Input { port } => decode_input(inputs[port], fmt, idx)?,
            Opcode::Const { value, .. } => value as i128,
            Opcode::Add { a, b } => {
                let va = align(values[a], fmts[a].frac_bits, fmt.frac_bits, idx)?;
                let vb = align(values[b], fmts[b].frac_bits, fmt.frac_bits, idx)?;
                va.checked_add(vb).ok_or_else(|| fault(idx, "add overflow"))?
            }
            Opcode::Sub { a, b } => {
                let va = align(values[a], fmts[a].frac_bits, fmt.frac_bits, idx)?;
                let vb = align(values[b], fmts[b].frac_bits, fmt.frac_bits, idx)?;
                va.checked_sub(vb).ok_or_else(|| fault(idx, "sub overflow"))?
            }
            // pure format reinterpretation: the mantissa is unchanged
            Opcode::Shl { a, .. } | Opcode::Shr { a, .. } => values[a],
            Opcode::Bitslice { a, fmt: target } => {
                let shift = target.frac_bits as i64 - fmts[a].frac_bits as i64;
                let m = if shift >= 0 {
                    values[a]
                        .checked_shl(shift.min(126) as u32)
                        .ok_or_else(|| fault(idx, "bitslice overflow"))?
                } else {
                    asr(values[a], (-shift).min(126) as u32)
                };
                wrap_into(m, target)
            }
            Opcode::Clamp { a, fmt: target } => {
                let shift = target.frac_bits as i64 - fmts[a].frac_bits as i64;
                let m = if shift >= 0 {
                    values[a]
                        .checked_shl(shift.min(126) as u32)
                        .ok_or_else(|| fault(idx, "clamp overflow"))?
                } else {
                    div_pow2_rnd(values[a], (-shift).min(126) as u32)
                };
                let (lo, hi) = target.mantissa_range();
                m.clamp(lo as i128, hi as i128)
            }
            Opcode::MulConst { a, value, .. } => values[a]
                .checked_mul(value as i128)
                .ok_or_else(|| fault(idx, "mul overflow"))?,
            Opcode::Llut { a, table } => {
                let t = &p.tables[table];
                let w = t.input_bits();
                let key = ((values[a] as u128) & mask_bits(w)) as usize;
                let entry = *t
                    .entries
                    .get(key)
                    .ok_or_else(|| fault(idx, format!("table index {key} out of range")))?;
                wrap_into(entry as i128, t.out_fmt)
            }
            Opcode::Output { a, port } => {
                let w = fmts[a].width();
                let bits = ((values[a] as u128) & mask_bits(w)) as u64;
                outputs[port] = bits;
                values[a]
            }
        };
        if opts.check_ranges {
            let (lo, hi) = fmt.mantissa_range();
            if v < lo as i128 || v > hi as i128 {
                return Err(fault(
                    idx,
                    format!("value {v} escapes its wire format [{lo}, {hi}]"),
                ));
            }
        }
        values.push(v);
    }
    // touch operand list helper so malformed ops cannot slip through in
    // release builds with validation skipped
    debug_assert!(p.instrs.iter().all(|i| operand_wires(&i.op).iter().all(|&w| w < values.len())));
    Ok(outputs)
}

/// Element-wise `interpret` over a batch, order-preserving. Faults carry the
/// offending sample index. Honors `LUTFORGE_THREADS` as a parallelism cap.
pub fn interpret_batch(p: &IrProgram, batch: &[Vec<u64>]) -> Result<Vec<Vec<u64>>> {
    let threads = thread_cap().min(batch.len().max(1));
    if threads <= 1 || batch.len() < 64 {
        return batch
            .iter()
            .enumerate()
            .map(|(s, inputs)| {
                interpret(p, inputs).map_err(|e| annotate_sample(e, s))
            })
            .collect();
    }
    let chunk = batch.len().div_ceil(threads);
    let mut results: Vec<Result<Vec<Vec<u64>>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .enumerate()
            .map(|(ci, chunk_data)| {
                scope.spawn(move || {
                    chunk_data
                        .iter()
                        .enumerate()
                        .map(|(s, inputs)| {
                            interpret(p, inputs).map_err(|e| annotate_sample(e, ci * chunk + s))
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        for h in handles {
            results.push(h.join().expect("interpreter thread panicked"));
        }
    });
    let mut out = Vec::with_capacity(batch.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn annotate_sample(e: Error, sample: usize) -> Error {
    match e {
        Error::Interp { index, message } => Error::Interp {
            index,
            message: format!("sample {sample}: {message}"),
        },
        other => other,
    }
}

fn thread_cap() -> usize {
    match std::env::var("LUTFORGE_THREADS") {
        Ok(v) => v.trim().parse::<usize>().unwrap_or(1).max(1),
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}
