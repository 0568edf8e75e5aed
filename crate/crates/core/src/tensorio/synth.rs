//! Deterministic synthetic tensors.
//!
//! The generator is counter based: element `n` of a stream keyed by `seed`
//! draws from the SplitMix64 output function evaluated at
//! `seed + (n + 1) * 0x9E3779B97F4A7C15` (wrapping). A uniform in `[0, 1)` is
//! the top 53 bits times `2^-53`. Gaussian samples use Box-Muller on the pair
//! of counters `(2n, 2n + 1)`: `sqrt(-2 ln(1 - u0)) * cos(2 pi u1)`, with `ln`
//! and `cos` taken from the portable `libm` implementations so that every
//! platform produces the same bits.

use std::fmt;
use std::str::FromStr;

use super::{Matrix, TensorError};
use crate::fxp::FxpFormat;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output for counter `n` of the stream keyed by `seed`.
pub fn splitmix64_at(seed: u64, n: u64) -> u64 {
    let mut z = seed.wrapping_add(n.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` for counter `n`.
pub fn uniform_at(seed: u64, n: u64) -> f64 {
    (splitmix64_at(seed, n) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), TensorError> {
        match *self {
            Distribution::Gaussian { mean, std } => {
                if !mean.is_finite() || !std.is_finite() || std < 0.0 {
                    return Err(TensorError::InvalidDistribution(format!("{self}: need finite mean and std >= 0")));
                }
            }
            Distribution::Uniform { low, high } => {
                if !low.is_finite() || !high.is_finite() || low > high {
                    return Err(TensorError::InvalidDistribution(format!("{self}: need finite low <= high")));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, seed: u64, n: u64) -> f64 {
        match *self {
            Distribution::Uniform { low, high } => low + (high - low) * uniform_at(seed, n),
            Distribution::Gaussian { mean, std } => {
                let u0 = uniform_at(seed, 2 * n);
                let u1 = uniform_at(seed, 2 * n + 1);
                let radius = libm::sqrt(-2.0 * libm::log(1.0 - u0));
                mean + std * radius * libm::cos(2.0 * std::f64::consts::PI * u1)
            }
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Gaussian { mean, std } => write!(f, "gaussian({mean},{std})"),
            Distribution::Uniform { low, high } => write!(f, "uniform({low},{high})"),
        }
    }
}

impl FromStr for Distribution {
    type Err = TensorError;

    /// Parses `gaussian(mean,std)` or `uniform(low,high)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TensorError::InvalidDistribution(format!("cannot parse {s:?}; expected gaussian(m,s) or uniform(a,b)"));
        let s_trim = s.trim();
        let (name, rest) = s_trim.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let (a, b) = args.split_once(',').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let dist = match name.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Distribution::Gaussian { mean: a, std: b },
            "uniform" => Distribution::Uniform { low: a, high: b },
            _ => return Err(bad()),
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Row-major reals before quantization.
pub fn sample_reals(rows: usize, cols: usize, dist: Distribution, seed: u64) -> Result<Vec<f64>, TensorError> {
    if rows == 0 || cols == 0 {
        return Err(TensorError::Shape(format!("synthetic tensor must be non-empty, got {rows}x{cols}")));
    }
    dist.validate()?;
    Ok((0..(rows * cols) as u64).map(|n| dist.sample(seed, n)).collect())
}

pub fn gen_synthetic(
    rows: usize,
    cols: usize,
    dist: Distribution,
    seed: u64,
    format: FxpFormat,
) -> Result<Matrix, TensorError> {
    let reals = sample_reals(rows, cols, dist, seed)?;
    Matrix::from_reals(rows, cols, &reals, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // Reference SplitMix64 stream seeded with 0: first outputs.
        assert_eq!(splitmix64_at(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64_at(0, 1), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn degenerate_uniform_is_zero() {
        let m = gen_synthetic(4, 4, Distribution::Uniform { low: 0.0, high: 0.0 }, 1, FxpFormat::Q8_8).unwrap();
        assert!(m.raws().iter().all(|&r| r == 0));
    }

    #[test]
    fn deterministic_for_seed() {
        let d = Distribution::Gaussian { mean: 0.0, std: 1.0 };
        let a = gen_synthetic(8, 8, d, 42, FxpFormat::Q8_8).unwrap();
        let b = gen_synthetic(8, 8, d, 42, FxpFormat::Q8_8).unwrap();
        let c = gen_synthetic(8, 8, d, 43, FxpFormat::Q8_8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_sample_mean_within_four_sigma() {
        let reals = sample_reals(64, 64, Distribution::Gaussian { mean: 0.0, std: 1.0 }, 7).unwrap();
        let n = reals.len() as f64;
        let mean = reals.iter().sum::<f64>() / n;
        assert!(mean.abs() <= 4.0 / n.sqrt(), "mean {mean}");
        let var = reals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn uniform_within_bounds() {
        let reals = sample_reals(32, 32, Distribution::Uniform { low: -2.0, high: 3.0 }, 9).unwrap();
        assert!(reals.iter().all(|&x| (-2.0..3.0).contains(&x)));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(sample_reals(2, 2, Distribution::Gaussian { mean: 0.0, std: -1.0 }, 0).is_err());
        assert!(sample_reals(2, 2, Distribution::Uniform { low: 1.0, high: 0.0 }, 0).is_err());
        assert!(sample_reals(0, 2, Distribution::Uniform { low: 0.0, high: 1.0 }, 0).is_err());
        assert!("gaussian(0,-1)".parse::<Distribution>().is_err());
        assert!("cauchy(0,1)".parse::<Distribution>().is_err());
    }

    #[test]
    fn parse_roundtrip() {
        let d: Distribution = "gaussian(0, 2.5)".parse().unwrap();
        assert_eq!(d, Distribution::Gaussian { mean: 0.0, std: 2.5 });
        assert_eq!(d.to_string().parse::<Distribution>().unwrap(), d);
        let u: Distribution = "uniform(-1,1)".parse().unwrap();
        assert_eq!(u, Distribution::Uniform { low: -1.0, high: 1.0 });
    }
}
