//! One head and a full layer of the pruned attention pipeline.
//!
//! Scores are held exactly in product scale, scaled by `1/sqrt(d_h)` in `f64`,
//! normalized with a max-subtracted softmax (`libm::exp`, left-to-right sum),
//! quantized to the data format and multiplied with `V` in wide integers.

use super::approx::approximate_scores;
use super::importance::{block_importance, integer_score, mask_integer_scores};
use super::threshold::{build_mask, head_decision, HeadDecision, PruneParams};
use super::{BlockMask, PruneStats};
use crate::attention_ref::{AttentionConfig, PrunedLogit};
use crate::error::{Error, Result};
use crate::fxp::{quantize, shift_round_even, FxpFormat};
use crate::tensorio::{Matrix, RealMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutcome {
    /// `l x d_h`, all zeros for a pruned head.
    pub output: Matrix,
    pub mask: BlockMask,
    pub decision: HeadDecision,
    pub theta_head: i64,
    pub stats: PruneStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutcome {
    /// `l x d`, heads concatenated in order.
    pub output: Matrix,
    pub heads: Vec<HeadOutcome>,
    pub stats: PruneStats,
}

impl LayerOutcome {
    pub fn masks(&self) -> Vec<&BlockMask> {
        self.heads.iter().map(|h| &h.mask).collect()
    }
}

/// Row softmax over the entries a mask lets through. Rows with nothing to
/// normalize stay zero.
pub fn softmax_rows(scores: &RealMatrix, mask: &BlockMask, mode: PrunedLogit) -> RealMatrix {
    let l = scores.rows();
    let mut probs = RealMatrix::zeros(l, scores.cols());
    let mut logits = Vec::with_capacity(scores.cols());
    for r in 0..l {
        logits.clear();
        logits.extend((0..scores.cols()).map(|c| match (mask.keeps_entry(r, c), mode) {
            (true, _) => Some(scores.get(r, c)),
            (false, PrunedLogit::Zero) => Some(0.0),
            (false, PrunedLogit::Exclude) => None,
        }));
        let max = logits.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let row = probs.row_mut(r);
        let mut sum = 0.0;
        for (p, x) in row.iter_mut().zip(&logits) {
            if let Some(x) = x {
                *p = libm::exp(x - max);
                sum += *p;
            }
        }
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    probs
}

/// Probabilities rounded to `format` (ties to even).
pub fn quantize_probs(probs: &RealMatrix, format: FxpFormat) -> Result<Matrix> {
    let raws = probs
        .data()
        .iter()
        .map(|&p| quantize(p, format).map(|v| v.raw()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::new(probs.rows(), probs.cols(), format, raws)?)
}

/// `P·V` in fixed point. The four quadrant products `IP·IV + IP·FV + FP·IV +
/// FP·FV` sum to the raw product, so the wide dot product is rounded once.
pub fn av_product(p: &Matrix, v: &Matrix) -> Result<Matrix> {
    if p.cols() != v.rows() || p.format() != v.format() {
        return Err(Error::Shape(format!(
            "P is {}x{} {}, V is {}x{} {}",
            p.rows(),
            p.cols(),
            p.format(),
            v.rows(),
            v.cols(),
            v.format()
        )));
    }
    let fmt = p.format();
    let mut acc = vec![0i64; p.rows() * v.cols()];
    for i in 0..p.rows() {
        let out = &mut acc[i * v.cols()..(i + 1) * v.cols()];
        for (j, &pij) in p.row(i).iter().enumerate() {
            if pij == 0 {
                continue;
            }
            for (o, &vj) in out.iter_mut().zip(v.row(j)) {
                *o += pij as i64 * vj as i64;
            }
        }
    }
    let raws = acc
        .into_iter()
        .map(|a| fmt.saturate(shift_round_even(a, fmt.frac_bits() as u32)) as i32)
        .collect();
    Ok(Matrix::new(p.rows(), v.cols(), fmt, raws)?)
}

/// Score entries that enter the softmax and so take part in `P·V`.
pub fn participating_entries(mask: &BlockMask, mode: PrunedLogit) -> u64 {
    match mode {
        PrunedLogit::Exclude => 4 * mask.kept_count() as u64,
        PrunedLogit::Zero => 4 * mask.total() as u64,
    }
}

/// Pipeline for one head on `l x d_h` slices.
pub fn hdp_attention_head(
    q_h: &Matrix,
    k_h: &Matrix,
    v_h: &Matrix,
    params: &PruneParams,
    cfg: &AttentionConfig,
) -> Result<HeadOutcome> {
    cfg.require_blocked()?;
    let (l, d_h) = (cfg.seq_len, cfg.head_dim());
    for (name, m) in [("Q_h", q_h), ("K_h", k_h), ("V_h", v_h)] {
        if m.rows() != l || m.cols() != d_h || m.format() != cfg.format {
            return Err(Error::Shape(format!(
                "{name} is {}x{} {}, expected {l}x{d_h} {}",
                m.rows(),
                m.cols(),
                m.format(),
                cfg.format
            )));
        }
    }
    let (q, k) = (q_h.split(), k_h.split());
    let integer_atten = integer_score(&q.int, &k.int)?;
    let imp = block_importance(&integer_atten)?;
    let mask = build_mask(&imp, params.rho_b())?;
    let decision = head_decision(imp.head_total(), params.tau_h());

    let side = mask.side() as u64;
    let (l64, d64) = (l as u64, d_h as u64);
    let mut stats = PruneStats {
        blocks_total: side * side,
        blocks_pruned: mask.pruned_count() as u64,
        heads_total: 1,
        macs_integer: l64 * l64 * d64,
        ..PruneStats::default()
    };

    if decision == HeadDecision::Prune {
        stats.heads_pruned = 1;
        stats.macs_frac_skipped = 2 * l64 * l64 * d64;
        stats.k_elements_fetch_skipped = 4 * d64 * side * side;
        return Ok(HeadOutcome {
            output: Matrix::zeros(l, d_h, cfg.format),
            mask,
            decision,
            theta_head: imp.head_total(),
            stats,
        });
    }

    let kept = mask.kept_count() as u64;
    let pruned = mask.pruned_count() as u64;
    stats.macs_frac_executed = 8 * d64 * kept;
    stats.macs_frac_skipped = 8 * d64 * pruned;
    stats.k_elements_fetch_skipped = 4 * d64 * pruned;
    stats.macs_av = 4 * d64 * participating_entries(&mask, params.pruned_logit);

    let scores = approximate_scores(&q, &k, &mask_integer_scores(&integer_atten, &mask), &mask)?;
    let probs = softmax_rows(&scores.scaled(d_h), &mask, params.pruned_logit);
    let output = av_product(&quantize_probs(&probs, cfg.format)?, v_h)?;
    Ok(HeadOutcome { output, mask, decision, theta_head: imp.head_total(), stats })
}

/// Runs every head in order and concatenates the outputs.
pub fn hdp_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    params: &PruneParams,
    cfg: &AttentionConfig,
) -> Result<LayerOutcome> {
    cfg.check_inputs(q, k, v)?;
    cfg.require_blocked()?;
    let heads = (0..cfg.heads)
        .map(|h| {
            let slice = |m: &Matrix| m.head(h, cfg.heads).map(|v| v.to_matrix());
            hdp_attention_head(&slice(q)?, &slice(k)?, &slice(v)?, params, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let output = Matrix::concat_cols(&heads.iter().map(|h| h.output.clone()).collect::<Vec<_>>())?;
    let stats = heads.iter().map(|h| h.stats).sum();
    Ok(LayerOutcome { output, heads, stats })
}
