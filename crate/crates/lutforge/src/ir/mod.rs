//! Linear instruction stream over typed fixed-point wires, with a lookup
//! opcode carrying an attached truth-table store, plus the bit-exact
//! interpreter that serves as the ground-truth executable semantics.
//!
//! Wire ids are SSA-like: instruction `k` defines wire `k`. Result formats
//! are derived from exact-arithmetic widening rules, never stored, so a
//! program cannot disagree with its own types.

mod file;
mod interp;

pub use file::{load_program, program_from_bytes, program_to_bytes, save_program};
pub use interp::{interpret, interpret_batch, interpret_with, InterpOptions};

use crate::error::{Error, Result};
use crate::fxp::FxpFormat;

/// Interpreter wire-width ceiling in bits.
pub const MAX_WIRE_BITS: u32 = 64;

/// Enumerated m-bit-in / n-bit-out table for one learned lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    pub in_fmt: FxpFormat,
    pub out_fmt: FxpFormat,
    /// `entries[k]` is the output bit pattern for input bit pattern `k`;
    /// length is exactly `2^m`.
    pub entries: Vec<u64>,
}

impl TruthTable {
    pub fn input_bits(&self) -> u32 {
        self.in_fmt.width()
    }

    pub fn output_bits(&self) -> u32 {
        self.out_fmt.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opcode {
    /// Bind one program input port to a wire.
    Input { port: usize },
    /// Fixed constant; `value` is the mantissa of `fmt`.
    Const { value: i64, fmt: FxpFormat },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    /// Multiply by `2^k`: free format reinterpretation.
    Shl { a: usize, k: u32 },
    Shr { a: usize, k: u32 },
    /// WRAP requantize: mask + sign-extend, zero hardware cost.
    Bitslice { a: usize, fmt: FxpFormat },
    /// SAT requantize with round-half-away; hybrid matmul layers only.
    Clamp { a: usize, fmt: FxpFormat },
    /// Multiply by an exact fixed-point constant (mantissa of `fmt`).
    MulConst { a: usize, value: i64, fmt: FxpFormat },
    /// Table lookup; operand format must equal the table's input format.
    Llut { a: usize, table: usize },
    /// Assign a wire to an output port.
    Output { a: usize, port: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instr {
    pub op: Opcode,
}

impl From<Opcode> for Instr {
    fn from(op: Opcode) -> Self {
        Instr { op }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IrProgram {
    pub instrs: Vec<Instr>,
    pub tables: Vec<TruthTable>,
    pub input_formats: Vec<FxpFormat>,
    pub output_formats: Vec<FxpFormat>,
}

/// One validation finding, anchored to an instruction index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub index: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "instr {}: {}", self.index, self.message)
    }
}

/// Minimal integer bits needed to represent mantissa `value` at `frac_bits`.
fn const_int_bits(value: i64, frac_bits: i32) -> i32 {
    if value == 0 {
        return 0;
    }
    if value > 0 {
        // smallest i with value <= 2^(i + f) - 1
        (64 - value.leading_zeros()) as i32 - frac_bits
    } else {
        // smallest i with -2^(i + f) <= value
        let a = (-(value as i128)) as u128;
        let bits = 128 - (a - 1).leading_zeros();
        bits as i32 - frac_bits
    }
}

impl IrProgram {
    pub fn n_inputs(&self) -> usize {
        self.input_formats.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_formats.len()
    }

    /// Result format of one instruction given the operand formats.
    pub fn result_fmt(&self, op: &Opcode, fmt_of: impl Fn(usize) -> FxpFormat) -> FxpFormat {
        match *op {
            Opcode::Input { port } => self.input_formats[port],
            Opcode::Const { fmt, .. } => fmt,
            Opcode::Add { a, b } => {
                let (fa, fb) = (fmt_of(a), fmt_of(b));
                FxpFormat::new(
                    fa.signed || fb.signed,
                    fa.int_bits.max(fb.int_bits) + 1,
                    fa.frac_bits.max(fb.frac_bits),
                )
            }
            Opcode::Sub { a, b } => {
                let (fa, fb) = (fmt_of(a), fmt_of(b));
                FxpFormat::new(
                    true,
                    fa.int_bits.max(fb.int_bits) + 1,
                    fa.frac_bits.max(fb.frac_bits),
                )
            }
            Opcode::Shl { a, k } => {
                let fa = fmt_of(a);
                FxpFormat::new(fa.signed, fa.int_bits + k as i32, fa.frac_bits - k as i32)
            }
            Opcode::Shr { a, k } => {
                let fa = fmt_of(a);
                FxpFormat::new(fa.signed, fa.int_bits - k as i32, fa.frac_bits + k as i32)
            }
            Opcode::Bitslice { fmt, .. } | Opcode::Clamp { fmt, .. } => fmt,
            Opcode::MulConst { a, value, fmt } => {
                if value == 0 {
                    return FxpFormat::new(false, 1, 0);
                }
                let fa = fmt_of(a);
                let ic = const_int_bits(value, fmt.frac_bits);
                let extra = (fa.signed && value < 0) as i32;
                FxpFormat::new(
                    fa.signed || value < 0,
                    fa.int_bits + ic + extra,
                    fa.frac_bits + fmt.frac_bits,
                )
            }
            Opcode::Llut { table, .. } => self.tables[table].out_fmt,
            Opcode::Output { a, .. } => fmt_of(a),
        }
    }

    /// Formats of every wire, or the first structural problem that prevents
    /// deriving them.
    pub fn wire_formats(&self) -> std::result::Result<Vec<FxpFormat>, Diagnostic> {
        let mut fmts: Vec<FxpFormat> = Vec::with_capacity(self.instrs.len());
        for (idx, instr) in self.instrs.iter().enumerate() {
            for opnd in operand_wires(&instr.op) {
                if opnd >= idx {
                    return Err(Diagnostic {
                        index: idx,
                        message: format!("use-before-def: operand is wire {opnd}"),
                    });
                }
            }
            match instr.op {
                Opcode::Input { port } if port >= self.n_inputs() => {
                    return Err(Diagnostic {
                        index: idx,
                        message: format!("input port {port} out of range"),
                    });
                }
                Opcode::Llut { table, .. } if table >= self.tables.len() => {
                    return Err(Diagnostic {
                        index: idx,
                        message: format!("unknown table {table}"),
                    });
                }
                _ => {}
            }
            fmts.push(self.result_fmt(&instr.op, |w| fmts[w]));
        }
        Ok(fmts)
    }

    /// Full invariant check. Returns every diagnostic found (empty = ok);
    /// never panics on malformed programs.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let fmts = match self.wire_formats() {
            Ok(f) => f,
            Err(d) => return vec![d],
        };

        for (idx, fmt) in fmts.iter().enumerate() {
            if fmt.width() > MAX_WIRE_BITS {
                diags.push(Diagnostic {
                    index: idx,
                    message: format!(
                        "wire width {} exceeds the {MAX_WIRE_BITS}-bit interpreter limit",
                        fmt.width()
                    ),
                });
            }
            if fmt.int_bits.unsigned_abs() > 256 || fmt.frac_bits.unsigned_abs() > 256 {
                diags.push(Diagnostic {
                    index: idx,
                    message: "degenerate format exponents".into(),
                });
            }
        }

        let mut port_seen = vec![Vec::new(); self.n_outputs()];
        let mut input_seen = vec![Vec::new(); self.n_inputs()];
        for (idx, instr) in self.instrs.iter().enumerate() {
            match instr.op {
                Opcode::Const { value, fmt } => {
                    let (lo, hi) = fmt.mantissa_range();
                    if value < lo || value > hi {
                        diags.push(Diagnostic {
                            index: idx,
                            message: format!("constant mantissa {value} outside format range"),
                        });
                    }
                }
                Opcode::MulConst { value, fmt, .. } => {
                    let (lo, hi) = fmt.mantissa_range();
                    if value < lo || value > hi {
                        diags.push(Diagnostic {
                            index: idx,
                            message: format!("constant mantissa {value} outside format range"),
                        });
                    }
                }
                Opcode::Llut { a, table } => {
                    let t = &self.tables[table];
                    let m = t.input_bits();
                    if fmts[a] != t.in_fmt {
                        diags.push(Diagnostic {
                            index: idx,
                            message: format!(
                                "operand format {:?} != table input format {:?}",
                                fmts[a], t.in_fmt
                            ),
                        });
                    }
                    if m >= 32 || t.entries.len() != 1usize << m {
                        diags.push(Diagnostic {
                            index: idx,
                            message: format!(
                                "table {table} has {} entries, want 2^{m}",
                                t.entries.len()
                            ),
                        });
                    }
                    let n = t.output_bits();
                    if n < 64 {
                        if let Some(bad) = t.entries.iter().position(|&e| e >> n != 0) {
                            diags.push(Diagnostic {
                                index: idx,
                                message: format!("table {table} entry {bad} wider than {n} bits"),
                            });
                        }
                    }
                }
                Opcode::Output { a, port } => {
                    if port >= self.n_outputs() {
                        diags.push(Diagnostic {
                            index: idx,
                            message: format!("output port {port} out of range"),
                        });
                    } else {
                        if fmts[a] != self.output_formats[port] {
                            diags.push(Diagnostic {
                                index: idx,
                                message: format!(
                                    "output port {port} format {:?} != wire format {:?}",
                                    self.output_formats[port], fmts[a]
                                ),
                            });
                        }
                        port_seen[port].push(idx);
                    }
                }
                Opcode::Input { port } => {
                    if port < self.n_inputs() {
                        input_seen[port].push(idx);
                    }
                }
                _ => {}
            }
        }
        for (port, mentions) in port_seen.iter().enumerate() {
            if mentions.len() != 1 {
                diags.push(Diagnostic {
                    index: mentions.last().copied().unwrap_or(self.instrs.len()),
                    message: format!(
                        "output port {port} assigned {} times, want exactly once",
                        mentions.len()
                    ),
                });
            }
        }
        for (port, mentions) in input_seen.iter().enumerate() {
            if mentions.len() != 1 {
                diags.push(Diagnostic {
                    index: mentions.last().copied().unwrap_or(self.instrs.len()),
                    message: format!(
                        "input port {port} bound {} times, want exactly once",
                        mentions.len()
                    ),
                });
            }
        }
        diags
    }

    /// `validate` with the first diagnostic turned into an error.
    pub fn validate_ok(&self) -> Result<()> {
        match self.validate().into_iter().next() {
            None => Ok(()),
            Some(d) => Err(Error::Ir { index: d.index, message: d.message }),
        }
    }

    /// Instruction counts per opcode name, for reports.
    pub fn opcode_counts(&self) -> std::collections::BTreeMap<&'static str, usize> {
        let mut m = std::collections::BTreeMap::new();
        for i in &self.instrs {
            *m.entry(opcode_name(&i.op)).or_insert(0) += 1;
        }
        m
    }
}

pub fn opcode_name(op: &Opcode) -> &'static str {
    match op {
        Opcode::Input { .. } => "INPUT",
        Opcode::Const { .. } => "CONST",
        Opcode::Add { .. } => "ADD",
        Opcode::Sub { .. } => "SUB",
        Opcode::Shl { .. } => "SHL",
        Opcode::Shr { .. } => "SHR",
        Opcode::Bitslice { .. } => "BITSLICE",
        Opcode::Clamp { .. } => "CLAMP",
        Opcode::MulConst { .. } => "MUL_CONST",
        Opcode::Llut { .. } => "LLUT",
        Opcode::Output { .. } => "OUTPUT",
    }
}

pub fn operand_wires(op: &Opcode) -> Vec<usize> {
    match *op {
        Opcode::Input { .. } | Opcode::Const { .. } => vec![],
        Opcode::Add { a, b } | Opcode::Sub { a, b } => vec![a, b],
        Opcode::Shl { a, .. }
        | Opcode::Shr { a, .. }
        | Opcode::Bitslice { a, .. }
        | Opcode::Clamp { a, .. }
        | Opcode::MulConst { a, .. }
        | Opcode::Llut { a, .. }
        | Opcode::Output { a, .. } => vec![a],
    }
}

/// Prove that no saturating requantize sits on any lookup input or output
/// path.
///
/// Input side: the chain of requantize/wiring instructions directly feeding
/// each `LLUT` must contain no `CLAMP`. Output side: no `CLAMP` may be
/// reachable backwards from its operand to an `LLUT` result through
/// add/sub/wiring chains (a constant multiply marks the hand-off into a
/// matmul layer, where saturation legitimately costs comparators).
pub fn scan_llut_clamp_paths(p: &IrProgram) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for (idx, instr) in p.instrs.iter().enumerate() {
        match instr.op {
            Opcode::Llut { a, .. } => {
                // walk back through requantize chain
                let mut cur = a;
                loop {
                    match p.instrs[cur].op {
                        Opcode::Clamp { a: next, .. } => {
                            diags.push(Diagnostic {
                                index: idx,
                                message: format!("CLAMP at instr {cur} on LLUT input path"),
                            });
                            cur = next;
                        }
                        Opcode::Bitslice { a: next, .. }
                        | Opcode::Shl { a: next, .. }
                        | Opcode::Shr { a: next, .. } => cur = next,
                        _ => break,
                    }
                }
            }
            Opcode::Clamp { a, .. } => {
                // walk back through summation/wiring closure
                let mut stack = vec![a];
                let mut seen = std::collections::HashSet::new();
                while let Some(w) = stack.pop() {
                    if !seen.insert(w) {
                        continue;
                    }
                    match p.instrs[w].op {
                        Opcode::Llut { .. } => {
                            diags.push(Diagnostic {
                                index: idx,
                                message: format!("CLAMP saturates LLUT output at instr {w}"),
                            });
                        }
                        Opcode::Add { a, b } | Opcode::Sub { a, b } => {
                            stack.push(a);
                            stack.push(b);
                        }
                        Opcode::Shl { a, .. }
                        | Opcode::Shr { a, .. }
                        | Opcode::Bitslice { a, .. }
                        | Opcode::Clamp { a, .. } => stack.push(a),
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }
    diags
}
