//! Truth-table extraction: turn each trained table's MLP (with folded
//! batch-norm and output quantizer) into an explicit entry array by
//! exhaustively enumerating its quantized input grid.

use crate::error::{Error, Result};
use crate::fxp::{from_bits, to_bits};
use crate::ir::TruthTable;
use crate::layers::LutDenseLayer;

/// Largest enumerable input width; a 16-bit table already has 65536 entries.
pub const DEFAULT_MAX_TABLE_BITS: u32 = 16;

/// Enumerate every table of an eval-mode layer.
///
/// Returns a `c_in x c_out` grid; `None` marks tables pruned by a zero-width
/// quantizer or folded away because every entry is zero. Elements sharing an
/// input width are enumerated together over one shared index sweep.
pub fn extract_layer(
    layer: &LutDenseLayer,
    max_table_bits: u32,
) -> Result<Vec<Vec<Option<TruthTable>>>> {
    layer.check_eval_ready()?;
    if layer.q_in.bypass || layer.q_out.bypass {
        return Err(Error::Lower(
            "cannot extract tables from a layer with bypassed quantizers".into(),
        ));
    }
    let (c_in, c_out) = (layer.c_in, layer.c_out);
    let mut grid: Vec<Vec<Option<TruthTable>>> = vec![vec![None; c_out]; c_in];

    // group elements by input width
    let mut groups: std::collections::BTreeMap<u32, Vec<(usize, usize)>> = Default::default();
    for j in 0..c_in {
        for i in 0..c_out {
            let e = layer.elem(j, i);
            let m = layer.q_in.width(e);
            let n = layer.q_out.width(e);
            if m == 0 || n == 0 {
                continue;
            }
            if m > max_table_bits {
                return Err(Error::Lower(format!(
                    "table ({j},{i}) needs a 2^{m}-entry enumeration; the limit is \
                     2^{max_table_bits}. Reduce the input quantizer width or raise \
                     max_table_bits."
                )));
            }
            groups.entry(m).or_default().push((j, i));
        }
    }

    for (m, elems) in groups {
        let size = 1usize << m;
        let mut tables: Vec<(usize, usize, TruthTable)> = elems
            .iter()
            .map(|&(j, i)| {
                let e = layer.elem(j, i);
                (
                    j,
                    i,
                    TruthTable {
                        in_fmt: layer.q_in.format(e),
                        out_fmt: layer.q_out.format(e),
                        entries: vec![0; size],
                    },
                )
            })
            .collect();
        // one shared sweep over the input index for the whole width group
        for k in 0..size {
            for (j, i, table) in tables.iter_mut() {
                let x = from_bits(k as u64, table.in_fmt)?;
                let v = layer.llut_scalar(*j, *i, x);
                table.entries[k] = to_bits(v, table.out_fmt)?;
            }
        }
        for (j, i, table) in tables {
            if table.entries.iter().any(|&e| e != 0) {
                grid[j][i] = Some(table);
            }
        }
    }
    Ok(grid)
}

/// Absorb the batch-norm affine into each MLP's output layer. The returned
/// layer has no batch-norm state and computes the identical eval-mode
/// function.
pub fn fold_batchnorm(layer: &LutDenseLayer) -> Result<LutDenseLayer> {
    let bn = layer
        .bn
        .as_ref()
        .ok_or_else(|| Error::Config("layer has no batch-norm to fold".into()))?;
    if !bn.populated {
        return Err(Error::Quant(
            "batch-norm running statistics are unpopulated; train first".into(),
        ));
    }
    let mut folded = layer.clone();
    for j in 0..layer.c_in {
        for i in 0..layer.c_out {
            let (a, b) = bn.affine(j, i);
            for k in 0..layer.hidden {
                folded.w1[[j, i, k]] = a * layer.w1[[j, i, k]];
            }
            folded.b1[[j, i]] = a * layer.b1[[j, i]] + b;
        }
    }
    folded.bn = None;
    Ok(folded)
}
