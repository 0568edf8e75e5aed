//! One grid point: the fixed-point pipeline, the Top-K baseline at the same
//! pruned fraction, and optionally the simulator, all against exact attention.

use hdp::attention_ref::{
    exact_attention, exact_head_scores, masked_softmax_attention, topk_block_prune, AttentionConfig,
};
use hdp::hdp::{hdp_attention, BlockMask, LayerOutcome, PruneParams};
use hdp::sim::{simulate_layer, SimOutcome};
use hdp::tensorio::{Matrix, RealMatrix};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Inputs and exact references shared by every grid point.
pub struct Workload {
    pub cfg: AttentionConfig,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    pub exact: RealMatrix,
    pub exact_scores: Vec<RealMatrix>,
    pub v_heads: Vec<RealMatrix>,
}

impl Workload {
    pub fn new(run: &RunConfig) -> Result<Self, CliError> {
        let cfg = run.attention()?;
        cfg.require_blocked()?;
        let (q, k, v) = run.inputs()?;
        Self::from_tensors(cfg, q, k, v)
    }

    pub fn from_tensors(cfg: AttentionConfig, q: Matrix, k: Matrix, v: Matrix) -> Result<Self, CliError> {
        let exact = exact_attention(&q, &k, &v, &cfg)?;
        let exact_scores = (0..cfg.heads).map(|h| exact_head_scores(&q, &k, &cfg, h)).collect::<Result<Vec<_>, _>>()?;
        let d_h = cfg.head_dim();
        let vr = v.to_reals();
        let v_heads = (0..cfg.heads).map(|h| vr.cols_slice(h * d_h, d_h)).collect();
        Ok(Workload { cfg, q, k, v, exact, exact_scores, v_heads })
    }
}

/// Row of `stats.csv` and `sweep.csv`. Simulator columns are empty when the
/// simulator is off, so the header never changes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRow {
    pub point: usize,
    pub rho_b: f64,
    pub tau_h: f64,
    pub block_pruned_fraction: f64,
    pub head_pruned_fraction: f64,
    pub topk_overlap: f64,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    pub blocks_total: u64,
    pub blocks_pruned: u64,
    pub heads_total: u64,
    pub heads_pruned: u64,
    pub macs_integer: u64,
    pub macs_frac_executed: u64,
    pub macs_frac_skipped: u64,
    pub macs_av: u64,
    pub k_elements_fetch_skipped: u64,
    pub sim_tile_steps: Option<u64>,
    pub sim_heads_skipped: Option<u64>,
    pub sim_elems_fetched: Option<u64>,
    pub sim_elems_skipped_fum: Option<u64>,
    pub sim_elems_skipped_head: Option<u64>,
    pub sim_dram_bytes_fetched: Option<u64>,
    pub sim_dram_bytes_skipped: Option<u64>,
}

/// Row of `compare.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub point: usize,
    pub rho_b: f64,
    pub tau_h: f64,
    pub hdp_block_pruned_fraction: f64,
    pub topk_block_pruned_fraction: f64,
    pub head_pruned_fraction: f64,
    pub overlap: f64,
    pub hdp_masked_max_abs_err: f64,
    pub hdp_masked_mean_abs_err: f64,
    pub topk_masked_max_abs_err: f64,
    pub topk_masked_mean_abs_err: f64,
    pub hdp_pipeline_max_abs_err: f64,
    pub hdp_pipeline_mean_abs_err: f64,
}

pub struct PointResult {
    pub point: usize,
    pub rho_b: f64,
    pub tau_h: f64,
    pub layer: LayerOutcome,
    /// Masks compared against Top-K; Top-K's own masks when self-comparing.
    pub hdp_masks: Vec<BlockMask>,
    pub topk_masks: Vec<BlockMask>,
    pub sim: Option<SimOutcome>,
}

/// `sum |A ∩ B| / sum |A|` over heads.
pub fn overlap(a: &[BlockMask], b: &[BlockMask]) -> f64 {
    let inter: usize = a.iter().zip(b).map(|(x, y)| x.intersection_count(y)).sum();
    let kept: usize = a.iter().map(BlockMask::kept_count).sum();
    if kept == 0 {
        1.0
    } else {
        inter as f64 / kept as f64
    }
}

fn pruned_fraction(masks: &[BlockMask]) -> f64 {
    let total: usize = masks.iter().map(BlockMask::total).sum();
    let pruned: usize = masks.iter().map(BlockMask::pruned_count).sum();
    pruned as f64 / total as f64
}

/// Top-K per head keeping `1 - p` where `p` is the head's pruned fraction in `masks`.
pub fn matched_topk(w: &Workload, masks: &[BlockMask]) -> Result<Vec<BlockMask>, CliError> {
    masks
        .iter()
        .zip(&w.exact_scores)
        .map(|(m, s)| Ok(topk_block_prune(s, 1.0 - m.pruned_fraction())?))
        .collect()
}

pub fn evaluate(
    w: &Workload,
    point: usize,
    params: &PruneParams,
    simulate: bool,
    self_compare: bool,
) -> Result<PointResult, CliError> {
    let layer = hdp_attention(&w.q, &w.k, &w.v, params, &w.cfg)?;
    let masks: Vec<BlockMask> = layer.heads.iter().map(|h| h.mask.clone()).collect();
    let topk_masks = matched_topk(w, &masks)?;
    let hdp_masks = if self_compare { topk_masks.clone() } else { masks };
    let sim = if simulate {
        let sim = simulate_layer(&w.q, &w.k, &w.v, params, &w.cfg)?;
        check_sim(&layer, &sim)?;
        Some(sim)
    } else {
        None
    };
    Ok(PointResult { point, rho_b: params.rho_b(), tau_h: params.tau_h(), layer, hdp_masks, topk_masks, sim })
}

/// The simulator must agree with the pipeline on masks and decisions, keep
/// traffic conserved and stay inside the output bound.
fn check_sim(layer: &LayerOutcome, sim: &SimOutcome) -> Result<(), CliError> {
    let fail = |m: String| Err(CliError::Invariant(m));
    for (h, (p, s)) in layer.heads.iter().zip(&sim.heads).enumerate() {
        if p.mask != s.mask || p.decision != s.report.decision {
            return fail(format!("head {h}: simulator mask or head decision differs from the pipeline"));
        }
        if !s.report.counters.is_conserved() {
            return fail(format!("head {h}: traffic counters are not conserved"));
        }
    }
    let (a, b) = (layer.output.to_reals(), sim.output.to_reals());
    let d_h = layer.heads.first().map_or(0, |h| h.output.cols());
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let bound = sim.heads[c / d_h].report.output_error_bound;
            let diff = (a.get(r, c) - b.get(r, c)).abs();
            if diff > bound {
                return fail(format!("output ({r}, {c}) differs by {diff}, bound {bound}"));
            }
        }
    }
    Ok(())
}

fn masked_output(w: &Workload, masks: &[BlockMask], params: &PruneParams) -> Result<RealMatrix, CliError> {
    let heads = masks
        .iter()
        .enumerate()
        .map(|(h, m)| masked_softmax_attention(&w.exact_scores[h], m, &w.v_heads[h], params.pruned_logit))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RealMatrix::concat_cols(&heads)?)
}

impl PointResult {
    pub fn row(&self, w: &Workload) -> PointRow {
        let s = self.layer.stats;
        let out = self.layer.output.to_reals();
        let total = self.sim.as_ref().map(|sim| (sim.report.total, sim.report.rows().pop().expect("total row")));
        PointRow {
            point: self.point,
            rho_b: self.rho_b,
            tau_h: self.tau_h,
            block_pruned_fraction: s.block_pruned_fraction(),
            head_pruned_fraction: s.head_pruned_fraction(),
            topk_overlap: overlap(&self.hdp_masks, &self.topk_masks),
            max_abs_err: out.max_abs_diff(&w.exact),
            mean_abs_err: out.mean_abs_diff(&w.exact),
            blocks_total: s.blocks_total,
            blocks_pruned: s.blocks_pruned,
            heads_total: s.heads_total,
            heads_pruned: s.heads_pruned,
            macs_integer: s.macs_integer,
            macs_frac_executed: s.macs_frac_executed,
            macs_frac_skipped: s.macs_frac_skipped,
            macs_av: s.macs_av,
            k_elements_fetch_skipped: s.k_elements_fetch_skipped,
            sim_tile_steps: total.as_ref().map(|t| t.0.tile_steps),
            sim_heads_skipped: total.as_ref().map(|t| t.0.heads_pruned),
            sim_elems_fetched: total.as_ref().map(|t| t.0.elems_fetched),
            sim_elems_skipped_fum: total.as_ref().map(|t| t.0.elems_skipped_fum),
            sim_elems_skipped_head: total.as_ref().map(|t| t.0.elems_skipped_head),
            sim_dram_bytes_fetched: total.as_ref().map(|t| t.1.dram_bytes_fetched),
            sim_dram_bytes_skipped: total.as_ref().map(|t| t.1.dram_bytes_skipped_fum + t.1.dram_bytes_skipped_head),
        }
    }

    pub fn compare_row(&self, w: &Workload, params: &PruneParams) -> Result<CompareRow, CliError> {
        let hdp_out = masked_output(w, &self.hdp_masks, params)?;
        let topk_out = masked_output(w, &self.topk_masks, params)?;
        let pipe = self.layer.output.to_reals();
        Ok(CompareRow {
            point: self.point,
            rho_b: self.rho_b,
            tau_h: self.tau_h,
            hdp_block_pruned_fraction: pruned_fraction(&self.hdp_masks),
            topk_block_pruned_fraction: pruned_fraction(&self.topk_masks),
            head_pruned_fraction: self.layer.stats.head_pruned_fraction(),
            overlap: overlap(&self.hdp_masks, &self.topk_masks),
            hdp_masked_max_abs_err: hdp_out.max_abs_diff(&w.exact),
            hdp_masked_mean_abs_err: hdp_out.mean_abs_diff(&w.exact),
            topk_masked_max_abs_err: topk_out.max_abs_diff(&w.exact),
            topk_masked_mean_abs_err: topk_out.mean_abs_diff(&w.exact),
            hdp_pipeline_max_abs_err: pipe.max_abs_diff(&w.exact),
            hdp_pipeline_mean_abs_err: pipe.mean_abs_diff(&w.exact),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_counts_kept_blocks() {
        let a = BlockMask::from_rows(&[vec![true, true], vec![false, true]]).unwrap();
        let b = BlockMask::from_rows(&[vec![true, false], vec![true, true]]).unwrap();
        assert_eq!(overlap(&[a.clone()], &[b.clone()]), 2.0 / 3.0);
        assert_eq!(overlap(&[a.clone(), b.clone()], &[a, b]), 1.0);
    }

    #[test]
    fn self_compare_is_exact() {
        let run = RunConfig { seq_len: 16, dim: 8, ..RunConfig::default() };
        let w = Workload::new(&run).unwrap();
        let params = run.params(0.2, 0.0).unwrap();
        let r = evaluate(&w, 0, &params, false, true).unwrap();
        let row = r.compare_row(&w, &params).unwrap();
        assert_eq!(row.overlap, 1.0);
        assert_eq!(row.hdp_masked_max_abs_err, row.topk_masked_max_abs_err);
    }
}
