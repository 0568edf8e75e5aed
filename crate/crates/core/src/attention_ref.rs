//! Reference attention in real arithmetic and the Top-K block-pruning baseline.
//!
//! Everything here runs on dequantized inputs in `f64` and is the golden
//! reference the fixed-point pipeline and the simulator are measured against.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fxp::FxpFormat;
use crate::hdp::BlockMask;
use crate::tensorio::{Matrix, RealMatrix};

/// Shape of one multi-head attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub seq_len: usize,
    pub dim: usize,
    pub heads: usize,
    pub format: FxpFormat,
}

impl AttentionConfig {
    /// Validates the head split. Block pruning additionally needs [`Self::require_blocked`].
    pub fn new(seq_len: usize, dim: usize, heads: usize, format: FxpFormat) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::Config("seq_len must be at least 1".into()));
        }
        if heads == 0 || dim == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("dim {dim} is not divisible into {heads} heads")));
        }
        Ok(AttentionConfig { seq_len, dim, heads, format })
    }

    /// `d / H`.
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Blocks per side of a head's score matrix (`l / 2`).
    pub fn blocks_per_side(&self) -> usize {
        self.seq_len / 2
    }

    /// Even `l >= 2` and `d_h >= 2`, as needed for 2x2 blocking.
    pub fn require_blocked(&self) -> Result<()> {
        if self.seq_len < 2 || self.seq_len % 2 != 0 {
            return Err(Error::Config(format!("seq_len must be even and >= 2 for 2x2 blocks, got {}", self.seq_len)));
        }
        if self.head_dim() < 2 {
            return Err(Error::Config(format!("head dim must be >= 2, got {}", self.head_dim())));
        }
        Ok(())
    }

    pub fn check_inputs(&self, q: &Matrix, k: &Matrix, v: &Matrix) -> Result<()> {
        for (name, m) in [("Q", q), ("K", k), ("V", v)] {
            if m.rows() != self.seq_len || m.cols() != self.dim {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    self.seq_len,
                    self.dim
                )));
            }
            if m.format() != self.format {
                return Err(Error::Shape(format!("{name} is stored as {}, expected {}", m.format(), self.format)));
            }
        }
        Ok(())
    }
}

/// How pruned score entries enter the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrunedLogit {
    /// Logit of minus infinity: zero probability, excluded from the normalizer.
    #[default]
    Exclude,
    /// Logit of zero: the entry still takes part in the normalizer.
    Zero,
}

impl fmt::Display for PrunedLogit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrunedLogit::Exclude => "exclude",
            PrunedLogit::Zero => "zero",
        })
    }
}

impl FromStr for PrunedLogit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exclude" => Ok(PrunedLogit::Exclude),
            "zero" => Ok(PrunedLogit::Zero),
            other => Err(Error::Config(format!("pruned_logit must be exclude or zero, got {other:?}"))),
        }
    }
}

/// `Q_h K_h^T / sqrt(d_h)`.
pub fn scaled_scores(q_h: &RealMatrix, k_h: &RealMatrix) -> Result<RealMatrix> {
    if q_h.cols() != k_h.cols() {
        return Err(Error::Shape(format!("Q has {} columns, K has {}", q_h.cols(), k_h.cols())));
    }
    let d_h = q_h.cols();
    let scale = 1.0 / (d_h as f64).sqrt();
    let mut s = RealMatrix::zeros(q_h.rows(), k_h.rows());
    for i in 0..q_h.rows() {
        for j in 0..k_h.rows() {
            let dot: f64 = q_h.row(i).iter().zip(k_h.row(j)).map(|(a, b)| a * b).sum();
            s.set(i, j, dot * scale);
        }
    }
    Ok(s)
}

/// Numerically stable softmax over the whole slice.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

fn matmul(p: &RealMatrix, v: &RealMatrix) -> RealMatrix {
    let mut out = RealMatrix::zeros(p.rows(), v.cols());
    for i in 0..p.rows() {
        for (j, &pij) in p.row(i).iter().enumerate() {
            if pij == 0.0 {
                continue;
            }
            for (o, &vj) in out.row_mut(i).iter_mut().zip(v.row(j)) {
                *o += pij * vj;
            }
        }
    }
    out
}

/// Dequantized head slices `(Q_h, K_h, V_h)`.
pub fn head_reals(q: &Matrix, k: &Matrix, v: &Matrix, cfg: &AttentionConfig, head: usize) -> Result<[RealMatrix; 3]> {
    let d_h = cfg.head_dim();
    let slice = |m: &Matrix| m.to_reals().cols_slice(head * d_h, d_h);
    Ok([slice(q), slice(k), slice(v)])
}

/// Exact scaled scores of one head.
pub fn exact_head_scores(q: &Matrix, k: &Matrix, cfg: &AttentionConfig, head: usize) -> Result<RealMatrix> {
    let d_h = cfg.head_dim();
    let q_h = q.to_reals().cols_slice(head * d_h, d_h);
    let k_h = k.to_reals().cols_slice(head * d_h, d_h);
    scaled_scores(&q_h, &k_h)
}

/// Dense multi-head attention on dequantized inputs; heads concatenated to `l x d`.
pub fn exact_attention(q: &Matrix, k: &Matrix, v: &Matrix, cfg: &AttentionConfig) -> Result<RealMatrix> {
    cfg.check_inputs(q, k, v)?;
    let (qr, kr, vr) = (q.to_reals(), k.to_reals(), v.to_reals());
    let d_h = cfg.head_dim();
    let heads = (0..cfg.heads)
        .map(|h| {
            let mut s = scaled_scores(&qr.cols_slice(h * d_h, d_h), &kr.cols_slice(h * d_h, d_h))?;
            for r in 0..s.rows() {
                softmax_in_place(s.row_mut(r));
            }
            Ok(matmul(&s, &vr.cols_slice(h * d_h, d_h)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RealMatrix::concat_cols(&heads)?)
}

/// Blocks kept per block-row by Top-K at `keep_fraction`: `ceil(keep_fraction * side)`.
pub fn topk_keep_count(side: usize, keep_fraction: f64) -> usize {
    // Absorb representation error such as 0.7 * 10 = 7.000000000000001.
    let k = (keep_fraction * side as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(side)
}

/// 2x2 block importance of a real score matrix: absolute sum of the four entries.
pub fn block_abs_sums(scores: &RealMatrix) -> Result<RealMatrix> {
    let l = scores.rows();
    if l != scores.cols() || l % 2 != 0 {
        return Err(Error::Shape(format!("score matrix must be square with even side, got {}x{}", l, scores.cols())));
    }
    let side = l / 2;
    let mut theta = RealMatrix::zeros(side, side);
    for bi in 0..side {
        for bj in 0..side {
            let mut acc = 0.0;
            for r in 2 * bi..2 * bi + 2 {
                for c in 2 * bj..2 * bj + 2 {
                    acc += scores.get(r, c).abs();
                }
            }
            theta.set(bi, bj, acc);
        }
    }
    Ok(theta)
}

/// Keeps the `ceil(keep_fraction * l/2)` most important blocks of every block-row.
/// Ties go to the lower column index.
pub fn topk_block_prune(scores: &RealMatrix, keep_fraction: f64) -> Result<BlockMask> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep_fraction must be in (0, 1], got {keep_fraction}")));
    }
    let theta = block_abs_sums(scores)?;
    let side = theta.rows();
    let keep = topk_keep_count(side, keep_fraction);
    let mut mask = BlockMask::filled(side, false);
    let mut order: Vec<usize> = (0..side).collect();
    for bi in 0..side {
        let row = theta.row(bi);
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &bj in &order[..keep] {
            mask.set(bi, bj, true);
        }
    }
    Ok(mask)
}

/// Row-wise softmax honouring a block mask.
pub fn masked_softmax(scores: &RealMatrix, mask: &BlockMask, mode: PrunedLogit) -> Result<RealMatrix> {
    let l = scores.rows();
    if scores.cols() != l || mask.side() * 2 != l {
        return Err(Error::Shape(format!(
            "{}x{} scores do not match a {}x{} block mask",
            l,
            scores.cols(),
            mask.side(),
            mask.side()
        )));
    }
    let mut probs = RealMatrix::zeros(l, l);
    for r in 0..l {
        let logits: Vec<Option<f64>> = (0..l)
            .map(|c| match (mask.keeps_entry(r, c), mode) {
                (true, _) => Some(scores.get(r, c)),
                (false, PrunedLogit::Zero) => Some(0.0),
                (false, PrunedLogit::Exclude) => None,
            })
            .collect();
        let max = logits.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let exps: Vec<f64> = logits.iter().map(|x| x.map_or(0.0, |x| (x - max).exp())).collect();
        let sum: f64 = exps.iter().sum();
        for (c, e) in exps.into_iter().enumerate() {
            probs.set(r, c, e / sum);
        }
    }
    Ok(probs)
}

/// `masked_softmax(S) * V_h`; a block-row with nothing kept yields zero output rows.
pub fn masked_softmax_attention(
    scores: &RealMatrix,
    mask: &BlockMask,
    v_h: &RealMatrix,
    mode: PrunedLogit,
) -> Result<RealMatrix> {
    if v_h.rows() != scores.rows() {
        return Err(Error::Shape(format!("V has {} rows, scores have {}", v_h.rows(), scores.rows())));
    }
    let probs = masked_softmax(scores, mask, mode)?;
    Ok(matmul(&probs, v_h))
}
