use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Square keep/prune map over the 2x2 blocks of an `l x l` score matrix.
/// `true` keeps the block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockMask {
    side: usize,
    bits: Vec<bool>,
}

impl BlockMask {
    pub fn filled(side: usize, keep: bool) -> Self {
        BlockMask { side, bits: vec![keep; side * side] }
    }

    pub fn all_kept(side: usize) -> Self {
        Self::filled(side, true)
    }

    pub fn from_bits(side: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != side * side {
            return Err(Error::Shape(format!("{side}x{side} mask needs {} bits, got {}", side * side, bits.len())));
        }
        Ok(BlockMask { side, bits })
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let side = rows.len();
        if rows.iter().any(|r| r.len() != side) {
            return Err(Error::Shape("mask rows must form a square".into()));
        }
        Ok(BlockMask { side, bits: rows.concat() })
    }

    /// Blocks per side (`l / 2`).
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.side + j]
    }

    pub fn set(&mut self, i: usize, j: usize, keep: bool) {
        self.bits[i * self.side + j] = keep;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.side..(i + 1) * self.side]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Whether score element `(r, c)` lies in a kept block.
    pub fn keeps_entry(&self, r: usize, c: usize) -> bool {
        self.get(r / 2, c / 2)
    }

    pub fn total(&self) -> usize {
        self.bits.len()
    }

    pub fn kept_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn pruned_count(&self) -> usize {
        self.total() - self.kept_count()
    }

    pub fn row_kept(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&b| b).count()
    }

    pub fn pruned_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.pruned_count() as f64 / self.total() as f64
    }

    /// Blocks kept by both masks.
    pub fn intersection_count(&self, other: &BlockMask) -> usize {
        assert_eq!(self.side, other.side);
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }

    /// Every block kept here is also kept in `other`.
    pub fn is_subset_of(&self, other: &BlockMask) -> bool {
        self.side == other.side && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// `1`/`0` per block, one block-row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.bits.len() * 2);
        for i in 0..self.side {
            for (j, &b) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", b as u8).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split(',')
                    .map(|f| match f.trim() {
                        "1" => Ok(true),
                        "0" => Ok(false),
                        other => Err(Error::Shape(format!("mask cell {other:?} is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_subsets() {
        let a = BlockMask::from_rows(&[vec![true, false], vec![false, false]]).unwrap();
        let b = BlockMask::from_rows(&[vec![true, true], vec![false, false]]).unwrap();
        assert_eq!(a.kept_count(), 1);
        assert_eq!(b.pruned_count(), 2);
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert_eq!(a.intersection_count(&b), 1);
        assert!(a.keeps_entry(1, 1));
        assert!(!a.keeps_entry(1, 2));
        assert_eq!(b.pruned_fraction(), 0.5);
    }

    #[test]
    fn csv_roundtrip() {
        let a = BlockMask::from_rows(&[vec![true, false], vec![false, true]]).unwrap();
        assert_eq!(a.to_csv(), "1,0\n0,1\n");
        assert_eq!(BlockMask::from_csv(&a.to_csv()).unwrap(), a);
        assert!(BlockMask::from_csv("1,0\n1\n").is_err());
        assert!(BlockMask::from_csv("1,2\n0,1\n").is_err());
    }
}
