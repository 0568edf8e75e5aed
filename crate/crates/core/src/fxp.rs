//! Signed two's-complement fixed-point values in a configurable `Q<i>.<f>` format.
//!
//! `i` counts the integer bits including the sign, `f` the fraction bits. The
//! default pipeline format is Q8.8. Every value can be split into an integer
//! part and a fractional remainder; the split truncates toward zero so that
//! any value with magnitude below one has a zero integer part regardless of sign.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Widest storage format supported. Tensors are serialized as 16-bit raws.
pub const MAX_TOTAL_BITS: u8 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FxpError {
    #[error("invalid fixed-point format Q{int_bits}.{frac_bits}: {reason}")]
    InvalidFormat { int_bits: u8, frac_bits: u8, reason: &'static str },
    #[error("cannot parse fixed-point format {0:?} (expected Q<i>.<f>, e.g. Q8.8)")]
    Parse(String),
    #[error("non-finite input")]
    NonFinite,
    #[error("raw value {raw} does not fit in {format}")]
    RawOutOfRange { raw: i64, format: FxpFormat },
    #[error("format mismatch: {0} vs {1}")]
    FormatMismatch(FxpFormat, FxpFormat),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxpFormat {
    total_bits: u8,
    frac_bits: u8,
}

impl FxpFormat {
    pub const Q8_8: FxpFormat = FxpFormat { total_bits: 16, frac_bits: 8 };

    pub fn new(total_bits: u8, frac_bits: u8) -> Result<Self, FxpError> {
        let err = |reason| FxpError::InvalidFormat {
            int_bits: total_bits.saturating_sub(frac_bits),
            frac_bits,
            reason,
        };
        if total_bits > MAX_TOTAL_BITS {
            return Err(err("total width exceeds 16 bits"));
        }
        if frac_bits == 0 {
            return Err(err("at least one fraction bit is required"));
        }
        if total_bits < frac_bits + 2 {
            return Err(err("need a sign bit and at least one integer bit"));
        }
        Ok(FxpFormat { total_bits, frac_bits })
    }

    pub fn total_bits(self) -> u8 {
        self.total_bits
    }

    pub fn frac_bits(self) -> u8 {
        self.frac_bits
    }

    /// Integer bits including the sign bit.
    pub fn int_bits(self) -> u8 {
        self.total_bits - self.frac_bits
    }

    /// Raw value representing 1.0.
    pub fn one_raw(self) -> i64 {
        1 << self.frac_bits
    }

    pub fn max_raw(self) -> i64 {
        (1 << (self.total_bits - 1)) - 1
    }

    pub fn min_raw(self) -> i64 {
        -(1 << (self.total_bits - 1))
    }

    /// Real value of one unit in the last place.
    pub fn ulp(self) -> f64 {
        1.0 / self.scale()
    }

    /// `2^frac_bits`.
    pub fn scale(self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    pub fn saturate(self, raw: i64) -> i64 {
        raw.clamp(self.min_raw(), self.max_raw())
    }

    pub fn contains_raw(self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    /// Bytes occupied by `elements` packed values of this format.
    pub fn bytes_for(self, elements: u64) -> u64 {
        (elements * self.total_bits as u64).div_ceil(8)
    }
}

impl Default for FxpFormat {
    fn default() -> Self {
        FxpFormat::Q8_8
    }
}

impl fmt::Display for FxpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits(), self.frac_bits)
    }
}

impl FromStr for FxpFormat {
    type Err = FxpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = || FxpError::Parse(s.to_string());
        let body = s.trim().strip_prefix(['Q', 'q']).ok_or_else(parse_err)?;
        let (i, f) = body.split_once('.').ok_or_else(parse_err)?;
        let int_bits: u8 = i.parse().map_err(|_| parse_err())?;
        let frac_bits: u8 = f.parse().map_err(|_| parse_err())?;
        let total = int_bits.checked_add(frac_bits).ok_or_else(parse_err)?;
        FxpFormat::new(total, frac_bits)
    }
}

/// A raw two's-complement value tagged with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxpValue {
    raw: i32,
    format: FxpFormat,
}

impl FxpValue {
    pub fn from_raw(raw: i64, format: FxpFormat) -> Result<Self, FxpError> {
        if !format.contains_raw(raw) {
            return Err(FxpError::RawOutOfRange { raw, format });
        }
        Ok(FxpValue { raw: raw as i32, format })
    }

    /// Builds a value from a raw, saturating to the format range.
    pub fn saturating_from_raw(raw: i64, format: FxpFormat) -> Self {
        FxpValue { raw: format.saturate(raw) as i32, format }
    }

    pub fn zero(format: FxpFormat) -> Self {
        FxpValue { raw: 0, format }
    }

    pub fn raw(self) -> i32 {
        self.raw
    }

    pub fn format(self) -> FxpFormat {
        self.format
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 / self.format.scale()
    }

    pub fn is_integer(self) -> bool {
        (self.raw as i64) % self.format.one_raw() == 0
    }

    /// Integer/fraction decomposition with truncation toward zero.
    pub fn split(self) -> FxpSplit {
        let one = self.format.one_raw();
        let raw = self.raw as i64;
        let int_raw = raw / one * one;
        FxpSplit {
            int_part: FxpValue { raw: int_raw as i32, format: self.format },
            frac_part: FxpValue { raw: (raw - int_raw) as i32, format: self.format },
        }
    }

    /// Rounded (nearest, ties to even) and saturated product.
    pub fn mul(self, rhs: FxpValue) -> Result<FxpValue, FxpError> {
        self.same_format(rhs)?;
        let wide = self.raw as i64 * rhs.raw as i64;
        let raw = shift_round_even(wide, self.format.frac_bits as u32);
        Ok(FxpValue::saturating_from_raw(raw, self.format))
    }

    /// Saturating sum.
    pub fn add(self, rhs: FxpValue) -> Result<FxpValue, FxpError> {
        self.same_format(rhs)?;
        Ok(FxpValue::saturating_from_raw(self.raw as i64 + rhs.raw as i64, self.format))
    }

    fn same_format(self, rhs: FxpValue) -> Result<(), FxpError> {
        if self.format != rhs.format {
            return Err(FxpError::FormatMismatch(self.format, rhs.format));
        }
        Ok(())
    }
}

impl fmt::Display for FxpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Integer part (zero fraction field) and fractional remainder of a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FxpSplit {
    pub int_part: FxpValue,
    pub frac_part: FxpValue,
}

/// Quantizes a real to the nearest representable value (ties to even),
/// saturating at the format bounds.
pub fn quantize(x: f64, format: FxpFormat) -> Result<FxpValue, FxpError> {
    if !x.is_finite() {
        return Err(FxpError::NonFinite);
    }
    // Scaling by a power of two is exact for every finite input that does not overflow.
    let scaled = (x * format.scale()).round_ties_even();
    let raw = if scaled >= format.max_raw() as f64 {
        format.max_raw()
    } else if scaled <= format.min_raw() as f64 {
        format.min_raw()
    } else {
        scaled as i64
    };
    Ok(FxpValue { raw: raw as i32, format })
}

pub fn split(v: FxpValue) -> FxpSplit {
    v.split()
}

pub fn fxp_mul(a: FxpValue, b: FxpValue) -> Result<FxpValue, FxpError> {
    a.mul(b)
}

pub fn fxp_add(a: FxpValue, b: FxpValue) -> Result<FxpValue, FxpError> {
    a.add(b)
}

/// Arithmetic right shift rounding to nearest, ties to even.
pub fn shift_round_even(value: i64, shift: u32) -> i64 {
    if shift == 0 {
        return value;
    }
    if shift >= 64 {
        // |value| < 2^63 <= half of 2^shift, so the result rounds to zero.
        return 0;
    }
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Same as [`shift_round_even`] for 128-bit intermediates.
pub fn shift_round_even_i128(value: i128, shift: u32) -> i128 {
    if shift == 0 {
        return value;
    }
    if shift >= 128 {
        return 0;
    }
    let floor = value >> shift;
    let rem = value - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}
