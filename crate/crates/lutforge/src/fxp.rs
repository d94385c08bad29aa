//! Fixed-point wire formats and the differentiable element-wise quantizers
//! used on every lookup-table boundary.
//!
//! A value is representable in a format when `v * 2^f` is an integer that
//! fits the format's width in two's complement (signed) or unsigned binary.
//! Width 0 is the pruned format: it represents exactly the constant 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overflow behaviour of a quantizer.
///
/// `Wrap` is a pure bit-slice in hardware; `Sat` costs comparators unless it
/// is resolved while building a truth table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QMode {
    #[serde(rename = "WRAP")]
    Wrap,
    #[serde(rename = "SAT")]
    Sat,
}

/// Rounding policy: truncation (floor) or round half away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rounding {
    #[serde(rename = "TRN")]
    Trn,
    #[serde(rename = "RND")]
    Rnd,
}

/// A fixed-point wire format: sign, integer bits and fractional bits.
///
/// `int_bits` and `frac_bits` may be negative; the effective width is
/// clamped at zero, so degenerate formats collapse to the pruned format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxpFormat {
    pub signed: bool,
    pub int_bits: i32,
    pub frac_bits: i32,
}

impl FxpFormat {
    pub fn new(signed: bool, int_bits: i32, frac_bits: i32) -> Self {
        Self { signed, int_bits, frac_bits }
    }

    /// Total width in bits; 0 denotes the pruned/constant-zero format.
    pub fn width(&self) -> u32 {
        let w = self.int_bits as i64 + self.frac_bits as i64 + self.signed as i64;
        w.max(0) as u32
    }

    pub fn is_null(&self) -> bool {
        self.width() == 0
    }

    /// Smallest representable step, `2^(-frac_bits)`.
    pub fn step(&self) -> f64 {
        (-self.frac_bits as f64).exp2()
    }

    pub fn min_value(&self) -> f64 {
        if self.is_null() {
            0.0
        } else if self.signed {
            -(self.int_bits as f64).exp2()
        } else {
            0.0
        }
    }

    pub fn max_value(&self) -> f64 {
        if self.is_null() {
            0.0
        } else {
            (self.int_bits as f64).exp2() - self.step()
        }
    }

    /// Scaled-integer bounds `[min, max]` of the mantissa `v * 2^f`.
    pub fn mantissa_range(&self) -> (i64, i64) {
        let w = self.width();
        if w == 0 {
            (0, 0)
        } else if self.signed {
            (-(1i64 << (w - 1)), (1i64 << (w - 1)) - 1)
        } else {
            (0, ((1u64 << w) - 1) as i64)
        }
    }

    /// True when `v` is exactly representable.
    pub fn contains(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        if self.is_null() {
            return v == 0.0;
        }
        let scaled = v * self.frac_bits_scale();
        if scaled.fract() != 0.0 {
            return false;
        }
        let (lo, hi) = self.mantissa_range();
        scaled >= lo as f64 && scaled <= hi as f64
    }

    fn frac_bits_scale(&self) -> f64 {
        (self.frac_bits as f64).exp2()
    }
}

fn apply_rounding(scaled: f64, rounding: Rounding) -> f64 {
    match rounding {
        Rounding::Trn => scaled.floor(),
        // f64::round is round-half-away-from-zero.
        Rounding::Rnd => scaled.round(),
    }
}

/// Quantize one value into `fmt` under the given overflow mode and rounding.
///
/// Total on finite inputs; width-0 formats return exactly 0.
pub fn quantize_value(x: f64, fmt: FxpFormat, mode: QMode, rounding: Rounding) -> f64 {
    let w = fmt.width();
    if w == 0 {
        return 0.0;
    }
    let scale = fmt.frac_bits_scale();
    let n = apply_rounding(x * scale, rounding);
    let n = match mode {
        QMode::Wrap => {
            let window = (w as f64).exp2();
            let mut r = n.rem_euclid(window);
            if fmt.signed && r >= window / 2.0 {
                r -= window;
            }
            r
        }
        QMode::Sat => {
            let (lo, hi) = fmt.mantissa_range();
            n.clamp(lo as f64, hi as f64)
        }
    };
    n / scale
}

/// True when `x` would be clamped by a saturating quantizer into `fmt`.
pub fn saturates(x: f64, fmt: FxpFormat, rounding: Rounding) -> bool {
    let w = fmt.width();
    if w == 0 {
        return true;
    }
    let n = apply_rounding(x * fmt.frac_bits_scale(), rounding);
    let (lo, hi) = fmt.mantissa_range();
    n < lo as f64 || n > hi as f64
}

/// Encode a representable value as its unsigned bit pattern (two's complement
/// in `width` bits for signed formats).
pub fn to_bits(v: f64, fmt: FxpFormat) -> Result<u64> {
    let w = fmt.width();
    if w == 0 {
        if v == 0.0 {
            return Ok(0);
        }
        return Err(Error::Quant(format!("{v} not representable in width-0 format")));
    }
    if w > 64 {
        return Err(Error::Quant(format!("width {w} exceeds 64-bit encoding limit")));
    }
    if !fmt.contains(v) {
        return Err(Error::Quant(format!(
            "{v} not representable in fmt(signed={}, i={}, f={})",
            fmt.signed, fmt.int_bits, fmt.frac_bits
        )));
    }
    let mantissa = (v * fmt.frac_bits_scale()) as i64;
    let mask = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
    Ok((mantissa as u64) & mask)
}

/// Decode a bit pattern back into the value it represents.
pub fn from_bits(b: u64, fmt: FxpFormat) -> Result<f64> {
    let w = fmt.width();
    if w == 0 {
        if b == 0 {
            return Ok(0.0);
        }
        return Err(Error::Quant("nonzero bits in width-0 format".into()));
    }
    if w > 64 {
        return Err(Error::Quant(format!("width {w} exceeds 64-bit encoding limit")));
    }
    if w < 64 && b >= (1u64 << w) {
        return Err(Error::Quant(format!("bit pattern {b:#x} exceeds {w}-bit format")));
    }
    let mantissa = if fmt.signed && w < 64 && b >= (1u64 << (w - 1)) {
        b as i64 - (1i64 << w)
    } else {
        b as i64
    };
    Ok(mantissa as f64 * fmt.step())
}

/// Element-wise trainable quantizer state.
///
/// Only the fractional width is gradient-trained (continuous `f_raw`,
/// rounded on use); integer bits come from range calibration and are
/// monotone non-decreasing over a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerState {
    pub mode: QMode,
    pub rounding: Rounding,
    /// Trainable fractional-bit parameter, one per element.
    pub f_raw: Vec<f64>,
    /// Calibrated integer bits, one per element.
    pub i_cal: Vec<i32>,
    pub signed: Vec<bool>,
    pub min_f: i32,
    pub max_f: i32,
    /// Pass-through mode: quantization disabled (float training / tests).
    pub bypass: bool,
    pub calibrated: bool,
}

pub const DEFAULT_MIN_F: i32 = -8;
pub const DEFAULT_MAX_F: i32 = 12;
pub const DEFAULT_F_RAW: f64 = 6.0;

impl QuantizerState {
    /// New quantizer with the default policy for its mode: WRAP quantizers
    /// truncate, SAT quantizers round.
    pub fn new(mode: QMode, n_elems: usize) -> Self {
        let rounding = match mode {
            QMode::Wrap => Rounding::Trn,
            QMode::Sat => Rounding::Rnd,
        };
        Self {
            mode,
            rounding,
            f_raw: vec![DEFAULT_F_RAW; n_elems],
            i_cal: vec![0; n_elems],
            signed: vec![false; n_elems],
            min_f: DEFAULT_MIN_F,
            max_f: DEFAULT_MAX_F,
            bypass: false,
            calibrated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.f_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_raw.is_empty()
    }

    /// Effective fractional bits: `round(f_raw)` clamped to `[min_f, max_f]`.
    pub fn eff_f(&self, e: usize) -> i32 {
        (self.f_raw[e].round() as i64).clamp(self.min_f as i64, self.max_f as i64) as i32
    }

    pub fn format(&self, e: usize) -> FxpFormat {
        FxpFormat::new(self.signed[e], self.i_cal[e], self.eff_f(e))
    }

    pub fn width(&self, e: usize) -> u32 {
        self.format(e).width()
    }

    /// Forward quantization of one element.
    pub fn quantize_elem(&self, e: usize, x: f64) -> f64 {
        if self.bypass {
            return x;
        }
        quantize_value(x, self.format(e), self.mode, self.rounding)
    }

    /// Straight-through input gradient factor: 1 except in the clamped
    /// region of a saturating quantizer.
    pub fn grad_mask_elem(&self, e: usize, x: f64) -> f64 {
        if self.bypass {
            return 1.0;
        }
        match self.mode {
            QMode::Wrap => 1.0,
            QMode::Sat => {
                if saturates(x, self.format(e), self.rounding) {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Surrogate gradient of the output w.r.t. `f_raw`: `ln(2) * (x - q(x))`.
    /// Zero at exact representability and bounded by `ln(2) * step / 2`.
    pub fn grad_f_raw_elem(&self, e: usize, x: f64) -> f64 {
        if self.bypass {
            return 0.0;
        }
        std::f64::consts::LN_2 * (x - self.quantize_elem(e, x))
    }

    /// Range calibration from observed data; call during training forwards
    /// only. `i_cal` grows monotonically, signedness latches on.
    pub fn calibrate_elem(&mut self, e: usize, max_abs: f64, saw_negative: bool) {
        if self.bypass {
            return;
        }
        let step = self.format(e).step();
        let need = (max_abs + step).log2().ceil();
        let need = if need.is_finite() { need as i32 } else { 0 };
        if need > self.i_cal[e] {
            self.i_cal[e] = need;
        }
        if saw_negative {
            self.signed[e] = true;
        }
        self.calibrated = true;
    }

    /// Continuous width used by the resource surrogate so gradients flow:
    /// `clamp(i_cal + signed + f_raw, 0, i_cal + signed + max_f)`.
    pub fn soft_width(&self, e: usize) -> f64 {
        let base = self.i_cal[e] as f64 + self.signed[e] as u8 as f64;
        let hi = (base + self.max_f as f64).max(0.0);
        (base + self.f_raw[e].clamp(self.min_f as f64, self.max_f as f64)).clamp(0.0, hi)
    }

    /// d(soft_width)/d(f_raw); zero where the clips are active.
    pub fn soft_width_grad(&self, e: usize) -> f64 {
        let w = self.soft_width(e);
        let base = self.i_cal[e] as f64 + self.signed[e] as u8 as f64;
        let hi = (base + self.max_f as f64).max(0.0);
        let inside_clip = w > 0.0 && w < hi;
        let inside_bounds =
            self.f_raw[e] > self.min_f as f64 && self.f_raw[e] < self.max_f as f64;
        if inside_clip && inside_bounds {
            1.0
        } else {
            0.0
        }
    }

    /// Force an element to width 0 (prune it).
    pub fn prune_elem(&mut self, e: usize) {
        self.signed[e] = false;
        self.i_cal[e] = 0;
        self.f_raw[e] = 0.0;
    }
}

/// Straight-through backward of `quantize` for one value per element:
/// the input gradient passes unmasked through WRAP and is zeroed in the
/// clamped region of SAT; the fractional-bit gradient uses the
/// `ln(2) * (x - q(x))` surrogate.
pub fn quantize_backward(
    upstream: &[f64],
    x: &[f64],
    q: &QuantizerState,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(upstream.len(), q.len());
    assert_eq!(x.len(), q.len());
    let grad_x = upstream
        .iter()
        .zip(x)
        .enumerate()
        .map(|(e, (&up, &xv))| up * q.grad_mask_elem(e, xv))
        .collect();
    let grad_f = upstream
        .iter()
        .zip(x)
        .enumerate()
        .map(|(e, (&up, &xv))| up * q.grad_f_raw_elem(e, xv))
        .collect();
    (grad_x, grad_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fmt(signed: bool, i: i32, f: i32) -> FxpFormat {
        FxpFormat::new(signed, i, f)
    }

    #[test]
    fn sat_rnd_rounds_to_step() {
        let q = quantize_value(3.7, fmt(true, 2, 1), QMode::Sat, Rounding::Rnd);
        assert_eq!(q, 3.5);
    }

    #[test]
    fn wrap_trn_wraps_into_twos_complement_window() {
        let q = quantize_value(4.25, fmt(true, 2, 1), QMode::Wrap, Rounding::Trn);
        assert_eq!(q, -4.0);
    }

    #[test]
    fn width_zero_returns_zero() {
        let f = fmt(false, 0, 0);
        assert_eq!(f.width(), 0);
        assert_eq!(quantize_value(123.4, f, QMode::Wrap, Rounding::Trn), 0.0);
        assert_eq!(quantize_value(123.4, f, QMode::Sat, Rounding::Rnd), 0.0);
    }

    #[test]
    fn sat_clamps_to_range_max() {
        let q = quantize_value(5.0, fmt(true, 2, 1), QMode::Sat, Rounding::Rnd);
        assert_eq!(q, 3.5);
    }

    #[test]
    fn degenerate_negative_width_is_pruned() {
        let f = fmt(true, -3, 1); // i + f + 1 = -1 -> width 0
        assert_eq!(f.width(), 0);
        assert_eq!(quantize_value(0.3, f, QMode::Sat, Rounding::Rnd), 0.0);
    }

    #[test]
    fn to_bits_twos_complement() {
        let f = fmt(true, 2, 1);
        assert_eq!(to_bits(-0.5, f).unwrap(), 0b1111);
        assert_eq!(to_bits(3.5, f).unwrap(), 0b0111);
        assert_eq!(from_bits(0, f).unwrap(), 0.0);
        assert_eq!(from_bits(0b1000, f).unwrap(), -4.0);
    }

    #[test]
    fn to_bits_rejects_unrepresentable() {
        assert!(to_bits(0.3, fmt(true, 2, 1)).is_err());
        assert!(to_bits(100.0, fmt(true, 2, 1)).is_err());
        assert!(from_bits(16, fmt(true, 2, 1)).is_err());
    }

    #[test]
    fn calibration_is_monotone() {
        let mut q = QuantizerState::new(QMode::Wrap, 1);
        q.calibrate_elem(0, 3.2, false);
        assert_eq!(q.i_cal[0], 2);
        assert!(!q.signed[0]);
        q.calibrate_elem(0, 0.5, true);
        assert_eq!(q.i_cal[0], 2);
        assert!(q.signed[0]);
    }

    #[test]
    fn grad_mask_zero_in_clamped_region() {
        let mut q = QuantizerState::new(QMode::Sat, 1);
        q.i_cal[0] = 2;
        q.signed[0] = true;
        q.f_raw[0] = 1.0;
        assert_eq!(q.grad_mask_elem(0, 1.0), 1.0);
        assert_eq!(q.grad_mask_elem(0, 5.0), 0.0);
        // exactly representable -> zero surrogate gradient
        assert_eq!(q.grad_f_raw_elem(0, 1.5), 0.0);
    }

    #[test]
    fn backward_masks_and_surrogate() {
        let mut q = QuantizerState::new(QMode::Sat, 3);
        for e in 0..3 {
            q.i_cal[e] = 2;
            q.signed[e] = true;
            q.f_raw[e] = 1.0; // range [-4, 3.5], step 0.5
        }
        // in range / clamped / exactly representable
        let x = [1.2, 5.0, 1.5];
        let (gx, gf) = quantize_backward(&[1.0, 1.0, 1.0], &x, &q);
        assert_eq!(gx, vec![1.0, 0.0, 1.0]);
        assert!(gf[0] != 0.0);
        assert_eq!(gf[2], 0.0);

        let mut qw = QuantizerState::new(QMode::Wrap, 1);
        qw.i_cal[0] = 1;
        // WRAP passes through even far out of range
        let (gx, _) = quantize_backward(&[1.0], &[100.0], &qw);
        assert_eq!(gx, vec![1.0]);
    }

    #[test]
    fn exhaustive_bit_patterns_up_to_8_bits() {
        for signed in [false, true] {
            for i in -4i32..=6 {
                for f in -4i32..=6 {
                    let fm = fmt(signed, i, f);
                    let w = fm.width();
                    if w == 0 || w > 8 {
                        continue;
                    }
                    let (lo, hi) = fm.mantissa_range();
                    for b in 0..(1u64 << w) {
                        let v = from_bits(b, fm).unwrap();
                        assert!(fm.contains(v));
                        let m = (v / fm.step()).round() as i64;
                        assert!(m >= lo && m <= hi, "mantissa {m} outside [{lo},{hi}]");
                        assert_eq!(to_bits(v, fm).unwrap(), b);
                        // representable values are fixed points of both modes
                        assert_eq!(quantize_value(v, fm, QMode::Wrap, Rounding::Trn), v);
                        assert_eq!(quantize_value(v, fm, QMode::Sat, Rounding::Rnd), v);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(
            x in -1e4f64..1e4,
            signed: bool,
            i in -2i32..8,
            f in -2i32..8,
            wrap: bool,
            rnd: bool,
        ) {
            let fm = fmt(signed, i, f);
            let mode = if wrap { QMode::Wrap } else { QMode::Sat };
            let r = if rnd { Rounding::Rnd } else { Rounding::Trn };
            let q1 = quantize_value(x, fm, mode, r);
            let q2 = quantize_value(q1, fm, mode, r);
            prop_assert_eq!(q1, q2);
            if fm.width() > 0 {
                prop_assert!(fm.contains(q1));
            } else {
                prop_assert_eq!(q1, 0.0);
            }
        }

        #[test]
        fn wrap_is_periodic_in_full_scale(
            x in -1e3f64..1e3,
            signed: bool,
            i in 0i32..6,
            f in 0i32..6,
        ) {
            let fm = fmt(signed, i, f);
            prop_assume!(fm.width() > 0);
            let period = ((i + signed as i32) as f64).exp2();
            let a = quantize_value(x, fm, QMode::Wrap, Rounding::Trn);
            let b = quantize_value(x + period, fm, QMode::Wrap, Rounding::Trn);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn sat_is_monotone(
            x in -1e3f64..1e3,
            y in -1e3f64..1e3,
            signed: bool,
            i in -2i32..6,
            f in -2i32..6,
        ) {
            let fm = fmt(signed, i, f);
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let a = quantize_value(lo, fm, QMode::Sat, Rounding::Rnd);
            let b = quantize_value(hi, fm, QMode::Sat, Rounding::Rnd);
            prop_assert!(a <= b);
        }

        #[test]
        fn bits_roundtrip(
            b: u64,
            signed: bool,
            i in 0i32..10,
            f in -3i32..10,
        ) {
            let fm = fmt(signed, i, f);
            prop_assume!(fm.width() > 0);
            let b = b & ((1u64 << fm.width()) - 1);
            let v = from_bits(b, fm).unwrap();
            prop_assert_eq!(to_bits(v, fm).unwrap(), b);
        }
    }
}
