//! Softmax unit.
//!
//! Scores are taken to Q16, shifted by the row max, and exponentiated by range
//! reduction `x = -k·ln2 + r`, `r` in `(-ln2, 0]`, with `e^r` replaced by the
//! quadratic `1 + C1·r + C2·r^2`. The quadratic minimizes the worst relative
//! error (about 0.27%) subject to `p(0) = 1` and `p(-ln2) = 1/2`, so adjacent
//! ranges meet without a step and the exponent stays monotone.
//!
//! The row sum `s` is normalized to `m = s / 2^(b+1)` in `[1/2, 1)`; `1/m` is
//! seeded with `48/17 - 32/17·m` and refined by one Newton step. Exact powers
//! of two bypass the seed. Probabilities come out in Q16.

use crate::fxp::{shift_round_even, shift_round_even_i128};

/// Fraction bits of scores, exponents and probabilities inside the unit.
pub const SOFTMAX_FRAC_BITS: u32 = 16;
/// Worst elementwise deviation from exact softmax the unit is built for.
pub const HW_SOFTMAX_TOLERANCE: f64 = 1.0 / 128.0;

/// `ln 2` in Q16.
pub const LN2_Q16: i64 = 45426;
/// Quadratic coefficients in Q30: `C1 = 0.9664369033817932`, `C2 = 0.3535892373381954`.
pub const EXP_C1_Q30: i64 = 1_037_703_723;
pub const EXP_C2_Q30: i64 = 379_663_553;
/// Linear reciprocal seed `48/17 - 32/17·m` in Q30.
pub const RECIP_A_Q30: i64 = 3_031_741_621;
pub const RECIP_B_Q30: i64 = 2_021_161_080;

const ONE_Q30: i64 = 1 << 30;

/// `e^(d / 2^16)` in Q16 for `d <= 0`.
pub fn hw_exp_q16(d: i64) -> i64 {
    debug_assert!(d <= 0);
    let k = (-d) / LN2_Q16;
    let r = d + k * LN2_Q16;
    let r = r as i128;
    let lin = shift_round_even_i128(EXP_C1_Q30 as i128 * r, 16);
    let quad = shift_round_even_i128(EXP_C2_Q30 as i128 * r * r, 32);
    let p = ONE_Q30 as i128 + lin + quad;
    let shift = 30 - SOFTMAX_FRAC_BITS as i64 + k;
    if shift >= 64 {
        return 0;
    }
    shift_round_even(p as i64, shift as u32)
}

/// `1 / (s / 2^(b+1))` in Q30, where `2^b <= s < 2^(b+1)`; returns `(y, b)`.
pub fn hw_reciprocal_q30(s: i64) -> (i64, u32) {
    assert!(s > 0, "reciprocal of a non-positive sum");
    let b = 63 - s.leading_zeros();
    if s == 1 << b {
        return (2 * ONE_Q30, b);
    }
    let m = if b + 1 >= 30 { s >> (b + 1 - 30) } else { s << (30 - b - 1) };
    let y0 = RECIP_A_Q30 - ((RECIP_B_Q30 as i128 * m as i128) >> 30) as i64;
    let my0 = ((m as i128 * y0 as i128) >> 30) as i64;
    let y1 = ((y0 as i128 * (2 * ONE_Q30 - my0) as i128) >> 30) as i64;
    (y1, b)
}

/// Softmax of one row of finite scores, as Q16 probabilities.
pub fn hw_softmax(row: &[f64]) -> Vec<f64> {
    if row.is_empty() {
        return Vec::new();
    }
    let scale = (1u64 << SOFTMAX_FRAC_BITS) as f64;
    let xs: Vec<i64> = row.iter().map(|&x| (x * scale).round_ties_even() as i64).collect();
    let max = *xs.iter().max().expect("non-empty");
    let exps: Vec<i64> = xs.iter().map(|&x| hw_exp_q16(x - max)).collect();
    let sum: i64 = exps.iter().sum();
    let (y, b) = hw_reciprocal_q30(sum);
    exps.iter()
        .map(|&e| shift_round_even_i128(e as i128 * y as i128, b + 15) as f64 / scale)
        .collect()
}
