//! Row thresholds, block masks and the head decision.
//!
//! The threshold interpolates between the row mean and its max (`rho >= 0`)
//! or its min (`rho < 0`). Block importances are integers and `rho` is a
//! binary fraction, so `theta < Theta` is decided exactly: with `n` blocks in
//! the row and `anchor` the max or min,
//!
//! ```text
//! theta < Theta  <=>  n*theta - sum < |rho| * (n*anchor - sum)
//!                <=>  n*theta - sum < ceil(|rho| * (n*anchor - sum))
//! ```
//!
//! and the right-hand ceiling is computed once per row in 128-bit integers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Float;

use super::importance::{BlockImportance, RowStats};
use super::BlockMask;
use crate::attention_ref::PrunedLogit;
use crate::error::{Error, Result};

/// Block pruning ratio, head pruning threshold and pruned-entry semantics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneParams {
    rho_b: f64,
    tau_h: f64,
    pub pruned_logit: PrunedLogit,
}

impl PruneParams {
    pub fn new(rho_b: f64, tau_h: f64) -> Result<Self> {
        check_rho(rho_b)?;
        if tau_h.is_nan() || tau_h < 0.0 {
            return Err(Error::Config(format!("tau_h must be >= 0, got {tau_h}")));
        }
        Ok(PruneParams { rho_b, tau_h, pruned_logit: PrunedLogit::Exclude })
    }

    pub fn with_pruned_logit(mut self, mode: PrunedLogit) -> Self {
        self.pruned_logit = mode;
        self
    }

    pub fn rho_b(&self) -> f64 {
        self.rho_b
    }

    pub fn tau_h(&self) -> f64 {
        self.tau_h
    }
}

fn check_rho(rho_b: f64) -> Result<()> {
    if !(rho_b > -1.0 && rho_b < 1.0) {
        return Err(Error::Config(format!("rho_b must lie in (-1, 1), got {rho_b}")));
    }
    Ok(())
}

/// Exact per-row threshold `Theta_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    count: i128,
    sum: i128,
    /// `ceil(|rho| * (n*anchor - sum))`
    cutoff: i128,
    rho_b: f64,
    anchor: i64,
}

impl Threshold {
    /// `theta < Theta`.
    pub fn prunes(&self, theta: i64) -> bool {
        self.count * theta as i128 - self.sum < self.cutoff
    }

    /// Exact value as a rational.
    pub fn value(&self) -> BigRational {
        let rho = BigRational::from_float(self.rho_b.abs()).expect("finite rho");
        let spread = BigInt::from(self.count * self.anchor as i128 - self.sum);
        let scaled = rho * BigRational::from_integer(spread) + BigRational::from_integer(BigInt::from(self.sum));
        scaled / BigRational::from_integer(BigInt::from(self.count))
    }

    pub fn to_f64(&self) -> f64 {
        let spread = (self.count * self.anchor as i128 - self.sum) as f64;
        (self.sum as f64 + self.rho_b.abs() * spread) / self.count as f64
    }
}

/// `ceil(m * 2^e * b)` for a non-negative mantissa `m` and `e <= 0`.
fn ceil_scaled(mantissa: u64, exponent: i16, b: i128) -> i128 {
    let t = mantissa as i128 * b;
    let shift = (-(exponent as i32)) as u32;
    if shift == 0 {
        return t;
    }
    if shift >= 127 {
        return (t > 0) as i128;
    }
    -((-t) >> shift)
}

/// Row threshold: `rho*max + (1-rho)*mean` for `rho >= 0`, else `-rho*min + (1+rho)*mean`.
pub fn row_threshold(stats: &RowStats, rho_b: f64) -> Result<Threshold> {
    check_rho(rho_b)?;
    if stats.count == 0 {
        return Err(Error::Precondition("row threshold over an empty row".into()));
    }
    let anchor = if rho_b >= 0.0 { stats.max } else { stats.min };
    let count = stats.count as i128;
    let sum = stats.sum as i128;
    let spread = count * anchor as i128 - sum;
    let (mantissa, exponent, _) = rho_b.abs().integer_decode();
    let cutoff = if mantissa == 0 { 0 } else { ceil_scaled(mantissa, exponent, spread) };
    Ok(Threshold { count, sum, cutoff, rho_b, anchor })
}

pub fn row_thresholds(imp: &BlockImportance, rho_b: f64) -> Result<Vec<Threshold>> {
    (0..imp.side()).map(|i| row_threshold(&imp.row_stats(i), rho_b)).collect()
}

/// Keeps a block unless its importance is strictly below its row threshold.
pub fn build_mask(imp: &BlockImportance, rho_b: f64) -> Result<BlockMask> {
    let side = imp.side();
    let mut mask = BlockMask::all_kept(side);
    for (i, theta_i) in row_thresholds(imp, rho_b)?.iter().enumerate() {
        for (j, &theta) in imp.theta_row(i).iter().enumerate() {
            if theta_i.prunes(theta) {
                mask.set(i, j, false);
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadDecision {
    Keep,
    Prune,
}

/// Keeps the head only when its importance strictly exceeds `tau_h`.
pub fn head_decision(theta_head: i64, tau_h: f64) -> HeadDecision {
    // Exact: |theta_head| stays far below 2^53.
    if theta_head as f64 > tau_h {
        HeadDecision::Keep
    } else {
        HeadDecision::Prune
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorio::WideMatrix;
    use proptest::prelude::*;

    fn stats(values: &[i64]) -> RowStats {
        RowStats::from_values(values)
    }

    fn rational(x: f64) -> BigRational {
        BigRational::from_float(x).unwrap()
    }

    // Independent: Theta as an exact rational straight from the formula.
    fn theta_oracle(s: &RowStats, rho: f64) -> BigRational {
        let n = BigRational::from_integer(BigInt::from(s.count));
        let mean = BigRational::from_integer(BigInt::from(s.sum)) / n;
        let r = rational(rho);
        let one = BigRational::from_integer(BigInt::from(1));
        if rho >= 0.0 {
            &r * BigRational::from_integer(BigInt::from(s.max)) + (&one - &r) * mean
        } else {
            -&r * BigRational::from_integer(BigInt::from(s.min)) + (&one + &r) * mean
        }
    }

    /// One block-row laid out as a 2 x 2n integer score matrix, top row only.
    fn importance_of_row(theta: &[i64]) -> BlockImportance {
        let side = theta.len();
        let mut m = WideMatrix::zeros(2 * side, 2 * side);
        for (j, &t) in theta.iter().enumerate() {
            m.set(0, 2 * j, t);
            for i in 1..side {
                m.set(2 * i, 2 * j, t);
            }
        }
        super::super::importance::block_importance(&m).unwrap()
    }

    #[test]
    fn threshold_examples() {
        let s = RowStats { min: 2, max: 8, sum: 20, count: 4 };
        assert_eq!(row_threshold(&s, 0.0).unwrap().to_f64(), 5.0);
        assert_eq!(row_threshold(&s, 0.5).unwrap().to_f64(), 6.5);
        assert_eq!(row_threshold(&s, -0.5).unwrap().to_f64(), 3.5);
        assert_eq!(row_threshold(&s, 0.5).unwrap().value(), rational(6.5));
        assert!(row_threshold(&s, 1.0).is_err());
        assert!(row_threshold(&s, -1.0).is_err());
        assert!(row_threshold(&s, f64::NAN).is_err());
    }

    #[test]
    fn mask_examples() {
        let imp = importance_of_row(&[2, 4, 6, 8]);
        assert_eq!(build_mask(&imp, 0.5).unwrap().row(0), &[false, false, false, true]);
        assert_eq!(build_mask(&imp, 0.0).unwrap().row(0), &[false, false, true, true]);
        for rho in [-0.9, -0.3, 0.0, 0.4, 0.99] {
            let uniform = importance_of_row(&[7, 7, 7, 7]);
            assert_eq!(build_mask(&uniform, rho).unwrap(), BlockMask::all_kept(4));
        }
        // All-zero row: nothing is strictly below zero.
        let zero = importance_of_row(&[0, 0, 0, 0]);
        assert_eq!(build_mask(&zero, 0.7).unwrap(), BlockMask::all_kept(4));
    }

    #[test]
    fn head_decision_boundaries() {
        assert_eq!(head_decision(0, 1.0), HeadDecision::Prune);
        assert_eq!(head_decision(0, 0.0), HeadDecision::Prune);
        assert_eq!(head_decision(1, 0.0), HeadDecision::Keep);
        assert_eq!(head_decision(10, 10.0), HeadDecision::Prune);
        assert_eq!(head_decision(10, 9.999), HeadDecision::Keep);
        assert_eq!(head_decision(i64::MAX >> 12, f64::INFINITY), HeadDecision::Prune);
    }

    #[test]
    fn params_validation() {
        assert!(PruneParams::new(0.3, 0.0).is_ok());
        assert!(PruneParams::new(1.0, 0.0).is_err());
        assert!(PruneParams::new(0.0, -1.0).is_err());
        assert!(PruneParams::new(0.0, f64::NAN).is_err());
        assert!(PruneParams::new(0.0, f64::INFINITY).is_ok());
    }

    #[test]
    fn tiny_rho_still_exact() {
        // Theta = mean + 1e-300 * (max - mean): a block equal to the mean is pruned.
        let s = RowStats { min: 1, max: 9, sum: 15, count: 3 };
        let t = row_threshold(&s, 1e-300).unwrap();
        assert!(t.prunes(5));
        assert!(!t.prunes(6));
        let t = row_threshold(&s, -1e-300).unwrap();
        assert!(!t.prunes(5));
        assert!(t.prunes(4));
    }

    proptest! {
        #[test]
        fn prunes_matches_rational_oracle(
            values in proptest::collection::vec(0i64..1_000_000, 1..40),
            rho in -0.999f64..0.999,
            probe in 0i64..1_000_000,
        ) {
            let s = stats(&values);
            let t = row_threshold(&s, rho).unwrap();
            let exact = theta_oracle(&s, rho);
            prop_assert_eq!(t.value(), exact.clone());
            for theta in values.iter().copied().chain([probe, s.min, s.max]) {
                let want = BigRational::from_integer(BigInt::from(theta)) < exact;
                prop_assert_eq!(t.prunes(theta), want);
            }
        }

        #[test]
        fn threshold_bounded_and_monotone(
            values in proptest::collection::vec(0i64..100_000, 1..30),
            a in -0.999f64..0.999,
            b in -0.999f64..0.999,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s = stats(&values);
            let (tl, th) = (row_threshold(&s, lo).unwrap().value(), row_threshold(&s, hi).unwrap().value());
            let min = BigRational::from_integer(BigInt::from(s.min));
            let max = BigRational::from_integer(BigInt::from(s.max));
            prop_assert!(min <= tl && tl <= max);
            prop_assert!(tl <= th);
        }
    }
}
