//! Differentiable resource surrogate: per-table LUT cost as a function of
//! input/output bit widths, and the empirical mapping from the surrogate to
//! synthesized LUT counts.

use serde::{Deserialize, Serialize};

/// Physical LUT primitive parameters: fan-in `x` of the device primitive and
/// the smallest split size `y` it decomposes into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutPrimitiveSpec {
    pub x: u32,
    pub y: u32,
}

impl LutPrimitiveSpec {
    pub fn new(x: u32, y: u32) -> crate::Result<Self> {
        if y == 0 || y > x {
            return Err(crate::Error::Config(format!(
                "LUT primitive needs 1 <= Y <= X, got X={x}, Y={y}"
            )));
        }
        Ok(Self { x, y })
    }
}

/// UltraScale+-style LUT6 that splits into two LUT5s.
impl Default for LutPrimitiveSpec {
    fn default() -> Self {
        Self { x: 6, y: 5 }
    }
}

/// LUT cost of one m-bit-in / n-bit-out table.
///
/// Defined for continuous widths so the same formula serves both the
/// trainable soft widths and the hard (integer) reporting path. Zero width
/// on either side means the table is pruned and costs nothing.
pub fn ebops_llut(m: f64, n: f64, spec: &LutPrimitiveSpec) -> f64 {
    if m <= 0.0 || n <= 0.0 {
        return 0.0;
    }
    let x = spec.x as f64;
    let y = spec.y as f64;
    if m >= y {
        (m - x).exp2() * n
    } else {
        m / y * (y - x).exp2() * n
    }
}

/// Partial derivatives of `ebops_llut` w.r.t. (m, n).
pub fn ebops_llut_grad(m: f64, n: f64, spec: &LutPrimitiveSpec) -> (f64, f64) {
    if m <= 0.0 || n <= 0.0 {
        return (0.0, 0.0);
    }
    let x = spec.x as f64;
    let y = spec.y as f64;
    if m >= y {
        let e = (m - x).exp2();
        (std::f64::consts::LN_2 * e * n, e)
    } else {
        let e = (y - x).exp2();
        (e * n / y, m / y * e)
    }
}

/// Empirical surrogate -> synthesized-LUT mapping.
pub fn estimate_luts(ebops: f64) -> f64 {
    if ebops <= 0.0 {
        0.0
    } else {
        ebops.powf(0.985)
    }
}
