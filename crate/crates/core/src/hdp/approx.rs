use super::BlockMask;
use crate::error::{Error, Result};
use crate::tensorio::{RealMatrix, SplitMatrix, WideMatrix};

/// Approximate scores `Integer_atten + IQ·FK^T + FQ·IK^T` held exactly in
/// product scale `2^(2·frac_bits)`. Pruned blocks hold zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproxScores {
    acc: WideMatrix,
    frac_bits: u8,
}

impl ApproxScores {
    pub(crate) fn from_acc(acc: WideMatrix, frac_bits: u8) -> Self {
        ApproxScores { acc, frac_bits }
    }

    pub fn acc(&self) -> &WideMatrix {
        &self.acc
    }

    pub fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    /// Real value of one entry before the `1/sqrt(d_h)` scaling.
    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.acc.get(r, c) as f64 / product_scale(self.frac_bits)
    }

    /// All entries divided by `sqrt(d_h)`.
    pub fn scaled(&self, d_h: usize) -> RealMatrix {
        let root = (d_h as f64).sqrt();
        let scale = product_scale(self.frac_bits);
        let data = self.acc.data().iter().map(|&a| a as f64 / scale / root).collect();
        RealMatrix::new(self.acc.rows(), self.acc.cols(), data).expect("same shape")
    }
}

fn product_scale(frac_bits: u8) -> f64 {
    (1u64 << (2 * frac_bits as u32)) as f64
}

/// Adds both cross fractions to the masked integer scores for kept blocks.
/// `FQ·FK^T` is never formed.
pub fn approximate_scores(
    q: &SplitMatrix,
    k: &SplitMatrix,
    integer_atten: &WideMatrix,
    mask: &BlockMask,
) -> Result<ApproxScores> {
    let (l, d) = (q.rows(), q.cols());
    if k.rows() != l || k.cols() != d || q.format() != k.format() {
        return Err(Error::Shape(format!("Q split is {l}x{d}, K split is {}x{}", k.rows(), k.cols())));
    }
    if integer_atten.rows() != l || integer_atten.cols() != l || mask.side() * 2 != l {
        return Err(Error::Shape(format!(
            "integer scores {}x{} and {}x{} mask do not fit l = {l}",
            integer_atten.rows(),
            integer_atten.cols(),
            mask.side(),
            mask.side()
        )));
    }
    let frac_bits = q.format().frac_bits();
    let shift = 2 * frac_bits as u32;
    let mut acc = WideMatrix::zeros(l, l);
    for r in 0..l {
        let (iq, fq) = (q.int.row(r), q.frac.row(r));
        for c in 0..l {
            if !mask.keeps_entry(r, c) {
                continue;
            }
            let (ik, fk) = (k.int.row(c), k.frac.row(c));
            let mut sum = integer_atten.get(r, c) << shift;
            for t in 0..d {
                sum += iq[t] as i64 * fk[t] as i64 + fq[t] as i64 * ik[t] as i64;
            }
            acc.set(r, c, sum);
        }
    }
    Ok(ApproxScores { acc, frac_bits })
}
