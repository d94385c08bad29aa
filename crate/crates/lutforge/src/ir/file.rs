//! Compiled-program file: magic "LFIR", u16 version, header with port
//! formats, fixed-width little-endian instruction records, then the
//! length-prefixed table store. Round-trips are byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use super::{Instr, IrProgram, Opcode, TruthTable};
use crate::error::{Error, Result};
use crate::fxp::FxpFormat;

const MAGIC: &[u8; 4] = b"LFIR";
const VERSION: u16 = 1;

const OP_INPUT: u8 = 0;
const OP_CONST: u8 = 1;
const OP_ADD: u8 = 2;
const OP_SUB: u8 = 3;
const OP_SHL: u8 = 4;
const OP_SHR: u8 = 5;
const OP_BITSLICE: u8 = 6;
const OP_CLAMP: u8 = 7;
const OP_MUL_CONST: u8 = 8;
const OP_LLUT: u8 = 9;
const OP_OUTPUT: u8 = 10;

fn write_fmt(out: &mut Vec<u8>, fmt: FxpFormat) -> Result<()> {
    let i: i16 = fmt
        .int_bits
        .try_into()
        .map_err(|_| Error::Format(format!("int_bits {} too large for file format", fmt.int_bits)))?;
    let f: i16 = fmt
        .frac_bits
        .try_into()
        .map_err(|_| Error::Format(format!("frac_bits {} too large for file format", fmt.frac_bits)))?;
    out.push(fmt.signed as u8);
    out.extend_from_slice(&i.to_le_bytes());
    out.extend_from_slice(&f.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated program file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fmt(&mut self) -> Result<FxpFormat> {
        let signed = self.u8()? != 0;
        let i = i16::from_le_bytes(self.take(2)?.try_into().unwrap());
        let f = i16::from_le_bytes(self.take(2)?.try_into().unwrap());
        Ok(FxpFormat::new(signed, i as i32, f as i32))
    }
}

pub fn program_to_bytes(p: &IrProgram) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.n_inputs() as u32).to_le_bytes());
    out.extend_from_slice(&(p.n_outputs() as u32).to_le_bytes());
    for f in &p.input_formats {
        write_fmt(&mut out, *f)?;
    }
    for f in &p.output_formats {
        write_fmt(&mut out, *f)?;
    }
    out.extend_from_slice(&(p.instrs.len() as u32).to_le_bytes());
    for instr in &p.instrs {
        let (opcode, a, b, imm, fmt) = match instr.op {
            Opcode::Input { port } => (OP_INPUT, port as u32, 0, 0, None),
            Opcode::Const { value, fmt } => (OP_CONST, 0, 0, value, Some(fmt)),
            Opcode::Add { a, b } => (OP_ADD, a as u32, b as u32, 0, None),
            Opcode::Sub { a, b } => (OP_SUB, a as u32, b as u32, 0, None),
            Opcode::Shl { a, k } => (OP_SHL, a as u32, k, 0, None),
            Opcode::Shr { a, k } => (OP_SHR, a as u32, k, 0, None),
            Opcode::Bitslice { a, fmt } => (OP_BITSLICE, a as u32, 0, 0, Some(fmt)),
            Opcode::Clamp { a, fmt } => (OP_CLAMP, a as u32, 0, 0, Some(fmt)),
            Opcode::MulConst { a, value, fmt } => (OP_MUL_CONST, a as u32, 0, value, Some(fmt)),
            Opcode::Llut { a, table } => (OP_LLUT, a as u32, table as u32, 0, None),
            Opcode::Output { a, port } => (OP_OUTPUT, a as u32, port as u32, 0, None),
        };
        out.push(opcode);
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
        out.extend_from_slice(&imm.to_le_bytes());
        write_fmt(&mut out, fmt.unwrap_or(FxpFormat::new(false, 0, 0)))?;
    }
    out.extend_from_slice(&(p.tables.len() as u32).to_le_bytes());
    for t in &p.tables {
        write_fmt(&mut out, t.in_fmt)?;
        write_fmt(&mut out, t.out_fmt)?;
        out.extend_from_slice(&(t.entries.len() as u32).to_le_bytes());
        for e in &t.entries {
            out.extend_from_slice(&e.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn program_from_bytes(buf: &[u8]) -> Result<IrProgram> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a LFIR program".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported LFIR version {version}")));
    }
    let n_in = r.u32()? as usize;
    let n_out = r.u32()? as usize;
    let mut p = IrProgram::default();
    for _ in 0..n_in {
        p.input_formats.push(r.fmt()?);
    }
    for _ in 0..n_out {
        p.output_formats.push(r.fmt()?);
    }
    let n_instrs = r.u32()? as usize;
    for idx in 0..n_instrs {
        let opcode = r.u8()?;
        let a = r.u32()? as usize;
        let b = r.u32()?;
        let imm = r.i64()?;
        let fmt = r.fmt()?;
        let op = match opcode {
            OP_INPUT => Opcode::Input { port: a },
            OP_CONST => Opcode::Const { value: imm, fmt },
            OP_ADD => Opcode::Add { a, b: b as usize },
            OP_SUB => Opcode::Sub { a, b: b as usize },
            OP_SHL => Opcode::Shl { a, k: b },
            OP_SHR => Opcode::Shr { a, k: b },
            OP_BITSLICE => Opcode::Bitslice { a, fmt },
            OP_CLAMP => Opcode::Clamp { a, fmt },
            OP_MUL_CONST => Opcode::MulConst { a, value: imm, fmt },
            OP_LLUT => Opcode::Llut { a, table: b as usize },
            OP_OUTPUT => Opcode::Output { a, port: b as usize },
            other => {
                return Err(Error::Format(format!("unknown opcode {other} at instr {idx}")))
            }
        };
        p.instrs.push(Instr::from(op));
    }
    let n_tables = r.u32()? as usize;
    for _ in 0..n_tables {
        let in_fmt = r.fmt()?;
        let out_fmt = r.fmt()?;
        let n = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            entries.push(r.u64()?);
        }
        p.tables.push(TruthTable { in_fmt, out_fmt, entries });
    }
    if r.pos != buf.len() {
        return Err(Error::Format("trailing bytes after program".into()));
    }
    Ok(p)
}

/// Atomically write a program file.
pub fn save_program(p: &IrProgram, path: &Path) -> Result<()> {
    let bytes = program_to_bytes(p)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_program(path: &Path) -> Result<IrProgram> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    program_from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_byte_identical() {
        let mut p = IrProgram::default();
        p.input_formats = vec![FxpFormat::new(true, 3, 2), FxpFormat::new(false, 4, -1)];
        p.output_formats = vec![FxpFormat::new(true, 5, 2)];
        p.tables.push(TruthTable {
            in_fmt: FxpFormat::new(false, 2, 0),
            out_fmt: FxpFormat::new(true, 2, 1),
            entries: vec![0, 3, 9, 15],
        });
        p.instrs = vec![
            Opcode::Input { port: 0 }.into(),
            Opcode::Input { port: 1 }.into(),
            Opcode::Bitslice { a: 0, fmt: FxpFormat::new(false, 2, 0) }.into(),
            Opcode::Llut { a: 2, table: 0 }.into(),
            Opcode::MulConst { a: 1, value: -3, fmt: FxpFormat::new(true, 2, 0) }.into(),
            Opcode::Add { a: 3, b: 4 }.into(),
            Opcode::Clamp { a: 5, fmt: FxpFormat::new(true, 5, 2) }.into(),
            Opcode::Output { a: 6, port: 0 }.into(),
        ];
        let bytes = program_to_bytes(&p).unwrap();
        let q = program_from_bytes(&bytes).unwrap();
        let bytes2 = program_to_bytes(&q).unwrap();
        assert_eq!(bytes, bytes2);
        assert_eq!(p.instrs, q.instrs);
        assert_eq!(p.tables, q.tables);
        assert_eq!(p.input_formats, q.input_formats);
    }

    #[test]
    fn rejects_garbage() {
        assert!(program_from_bytes(b"nope").is_err());
        assert!(program_from_bytes(b"LFIR\x02\x00").is_err());
        let p = IrProgram::default();
        let mut bytes = program_to_bytes(&p).unwrap();
        bytes.push(0);
        assert!(program_from_bytes(&bytes).is_err());
    }
}
