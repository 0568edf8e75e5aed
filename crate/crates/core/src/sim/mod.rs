//! Cost simulator of the pruning co-processor.
//!
//! Heads run one after another through four stages: the tiled integer pass
//! on the PE array, the sparsity engine, the fraction pass over kept blocks
//! and, after the softmax unit, the `P·V` pass. Counters are exact. DRAM
//! traffic is counted in elements of one component plane and converted to
//! bytes with the data format; there is no timing or buffer model.
//!
//! Read demand of one head (elements), split by stage:
//!
//! | stage    | demand                 | skipped when                  |
//! |----------|------------------------|-------------------------------|
//! | integer  | `2·l·d_h` (IQ, IK)     | never                         |
//! | frac, Q  | `4·d_h` per block-row  | the block-row keeps nothing   |
//! | frac, K  | `4·d_h` per block      | the block is pruned           |
//! | AV       | `2·l·d_h` (IV, FV)     | the head is pruned            |
//!
//! A pruned head skips everything after the integer pass; that share is
//! reported separately from mask-driven skipping. Every head writes `l·d_h`.

mod av;
mod engine;
mod frac;
mod pe;
mod softmax;
mod tiling;

use std::ops::AddAssign;

use serde::Serialize;

pub use av::{run_av_pass, AvPass, QUADRANTS};
pub use engine::{SeCounters, SeEvent, SparsityEngine};
pub use frac::{run_frac_pass, FracPass, FracTraffic};
pub use pe::{run_integer_pass, IntegerPass, PeState, PE_COLS, PE_ROWS};
pub use softmax::{
    hw_exp_q16, hw_reciprocal_q30, hw_softmax, EXP_C1_Q30, EXP_C2_Q30, HW_SOFTMAX_TOLERANCE, LN2_Q16, RECIP_A_Q30,
    RECIP_B_Q30, SOFTMAX_FRAC_BITS,
};
pub use tiling::{schedule_tiles, TileSchedule, TileStep, TILE_COLS, TILE_DEPTH, TILE_ROWS};

use crate::attention_ref::{AttentionConfig, PrunedLogit};
use crate::error::{Error, Result};
use crate::fxp::FxpFormat;
use crate::hdp::{mask_integer_scores, quantize_probs, softmax_rows, BlockMask, HeadDecision, PruneParams};
use crate::tensorio::{Matrix, RealMatrix, WideMatrix};

/// Exact counters of one head, or of a layer when summed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounters {
    pub tile_steps: u64,
    pub macs_integer: u64,
    pub macs_frac1: u64,
    pub macs_frac2: u64,
    pub macs_frac_skipped: u64,
    /// Indexed like [`QUADRANTS`].
    pub macs_av: [u64; 4],
    pub se: SeCounters,
    pub blocks_total: u64,
    pub blocks_pruned: u64,
    pub heads_pruned: u64,
    pub elems_demand: u64,
    pub elems_fetched: u64,
    pub elems_skipped_fum: u64,
    pub elems_skipped_head: u64,
    pub elems_written: u64,
}

impl SimCounters {
    pub fn macs_av_total(&self) -> u64 {
        self.macs_av.iter().sum()
    }

    /// `fetched + skipped == demand`.
    pub fn is_conserved(&self) -> bool {
        self.elems_fetched + self.elems_skipped_fum + self.elems_skipped_head == self.elems_demand
    }
}

impl AddAssign for SimCounters {
    fn add_assign(&mut self, o: Self) {
        self.tile_steps += o.tile_steps;
        self.macs_integer += o.macs_integer;
        self.macs_frac1 += o.macs_frac1;
        self.macs_frac2 += o.macs_frac2;
        self.macs_frac_skipped += o.macs_frac_skipped;
        for (a, b) in self.macs_av.iter_mut().zip(o.macs_av) {
            *a += b;
        }
        self.se.importance += o.se.importance;
        self.se.end_r += o.se.end_r;
        self.se.end_h += o.se.end_h;
        self.blocks_total += o.blocks_total;
        self.blocks_pruned += o.blocks_pruned;
        self.heads_pruned += o.heads_pruned;
        self.elems_demand += o.elems_demand;
        self.elems_fetched += o.elems_fetched;
        self.elems_skipped_fum += o.elems_skipped_fum;
        self.elems_skipped_head += o.elems_skipped_head;
        self.elems_written += o.elems_written;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadReport {
    pub head: usize,
    pub decision: HeadDecision,
    pub theta_head: i64,
    pub counters: SimCounters,
    /// Largest measured `|hw_softmax - softmax|` over the head's probabilities.
    pub softmax_max_abs_error: f64,
    /// Largest per-column bound on `|simulated - pipeline|` output deviation.
    pub output_error_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub format: FxpFormat,
    pub heads: Vec<HeadReport>,
    pub total: SimCounters,
}

/// One CSV row of a [`SimReport`]; `head` is the head index or `total`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub head: String,
    pub decision: String,
    pub theta_head: i64,
    pub tile_steps: u64,
    pub macs_integer: u64,
    pub macs_frac1: u64,
    pub macs_frac2: u64,
    pub macs_frac_skipped: u64,
    pub macs_av_ii: u64,
    pub macs_av_if: u64,
    pub macs_av_fi: u64,
    pub macs_av_ff: u64,
    pub se_importance_events: u64,
    pub se_end_r: u64,
    pub se_end_h: u64,
    pub blocks_total: u64,
    pub blocks_pruned: u64,
    pub heads_pruned: u64,
    pub elems_demand: u64,
    pub elems_fetched: u64,
    pub elems_skipped_fum: u64,
    pub elems_skipped_head: u64,
    pub elems_written: u64,
    pub dram_bytes_fetched: u64,
    pub dram_bytes_skipped_fum: u64,
    pub dram_bytes_skipped_head: u64,
    pub dram_bytes_written: u64,
    pub softmax_max_abs_error: f64,
    pub softmax_error_bound: f64,
    pub output_error_bound: f64,
}

impl SimReport {
    pub fn heads_skipped(&self) -> u64 {
        self.total.heads_pruned
    }

    /// Per-head rows followed by the layer total.
    pub fn rows(&self) -> Vec<SimRow> {
        let mut rows: Vec<SimRow> = self
            .heads
            .iter()
            .map(|h| {
                let decision = match h.decision {
                    HeadDecision::Keep => "keep",
                    HeadDecision::Prune => "prune",
                };
                self.row(
                    h.head.to_string(),
                    decision.into(),
                    h.theta_head,
                    &h.counters,
                    h.softmax_max_abs_error,
                    h.output_error_bound,
                )
            })
            .collect();
        let theta: i64 = self.heads.iter().map(|h| h.theta_head).sum();
        let sm = self.heads.iter().map(|h| h.softmax_max_abs_error).fold(0.0, f64::max);
        let bound = self.heads.iter().map(|h| h.output_error_bound).fold(0.0, f64::max);
        rows.push(self.row("total".into(), "-".into(), theta, &self.total, sm, bound));
        rows
    }

    fn row(&self, head: String, decision: String, theta_head: i64, c: &SimCounters, sm: f64, bound: f64) -> SimRow {
        let bytes = |e| self.format.bytes_for(e);
        SimRow {
            head,
            decision,
            theta_head,
            tile_steps: c.tile_steps,
            macs_integer: c.macs_integer,
            macs_frac1: c.macs_frac1,
            macs_frac2: c.macs_frac2,
            macs_frac_skipped: c.macs_frac_skipped,
            macs_av_ii: c.macs_av[0],
            macs_av_if: c.macs_av[1],
            macs_av_fi: c.macs_av[2],
            macs_av_ff: c.macs_av[3],
            se_importance_events: c.se.importance,
            se_end_r: c.se.end_r,
            se_end_h: c.se.end_h,
            blocks_total: c.blocks_total,
            blocks_pruned: c.blocks_pruned,
            heads_pruned: c.heads_pruned,
            elems_demand: c.elems_demand,
            elems_fetched: c.elems_fetched,
            elems_skipped_fum: c.elems_skipped_fum,
            elems_skipped_head: c.elems_skipped_head,
            elems_written: c.elems_written,
            dram_bytes_fetched: bytes(c.elems_fetched),
            dram_bytes_skipped_fum: bytes(c.elems_skipped_fum),
            dram_bytes_skipped_head: bytes(c.elems_skipped_head),
            dram_bytes_written: bytes(c.elems_written),
            softmax_max_abs_error: sm,
            softmax_error_bound: HW_SOFTMAX_TOLERANCE,
            output_error_bound: bound,
        }
    }
}

/// Functional results of one simulated head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSim {
    pub output: Matrix,
    pub integer_atten: WideMatrix,
    pub mask: BlockMask,
    pub report: HeadReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// `l x d`, heads concatenated in order.
    pub output: Matrix,
    pub heads: Vec<HeadSim>,
    pub report: SimReport,
}

/// Per-column bound on `|simulated - pipeline|` for a head with values `v_h`:
/// `(2^-7 + 2^-F)·sum_j |V_jc| + 2^-F`.
pub fn output_error_bounds(v_h: &Matrix) -> Vec<f64> {
    let ulp = v_h.format().ulp();
    let vr = v_h.to_reals();
    (0..vr.cols())
        .map(|c| {
            let mass: f64 = (0..vr.rows()).map(|r| vr.get(r, c).abs()).sum();
            (HW_SOFTMAX_TOLERANCE + ulp) * mass + ulp
        })
        .collect()
}

/// Softmax unit applied row by row with the pruned-entry semantics of `mode`.
pub fn hw_softmax_rows(scores: &RealMatrix, mask: &BlockMask, mode: PrunedLogit) -> RealMatrix {
    let mut probs = RealMatrix::zeros(scores.rows(), scores.cols());
    for r in 0..scores.rows() {
        let idx: Vec<usize> = (0..scores.cols())
            .filter(|&c| mode == PrunedLogit::Zero || mask.keeps_entry(r, c))
            .collect();
        let logits: Vec<f64> = idx
            .iter()
            .map(|&c| if mask.keeps_entry(r, c) { scores.get(r, c) } else { 0.0 })
            .collect();
        for (&c, p) in idx.iter().zip(hw_softmax(&logits)) {
            probs.set(r, c, p);
        }
    }
    probs
}

/// Simulates one head on `l x d_h` slices.
pub fn simulate_head(
    head: usize,
    q_h: &Matrix,
    k_h: &Matrix,
    v_h: &Matrix,
    params: &PruneParams,
    cfg: &AttentionConfig,
) -> Result<HeadSim> {
    cfg.require_blocked()?;
    let (l, d_h) = (cfg.seq_len, cfg.head_dim());
    for m in [q_h, k_h, v_h] {
        if m.rows() != l || m.cols() != d_h || m.format() != cfg.format {
            return Err(Error::Shape(format!("head slice is {}x{}, expected {l}x{d_h}", m.rows(), m.cols())));
        }
    }
    let qk = schedule_tiles(l, d_h, l)?;
    let pv = schedule_tiles(l, l, d_h)?;
    let (q, k) = (q_h.split(), k_h.split());

    let int_pass = run_integer_pass(&q.int, &k.int, &qk)?;
    let mut se = SparsityEngine::new(l / 2, params.rho_b(), params.tau_h())?;
    for &event in &int_pass.events {
        se.step(event)?;
    }
    let (theta_head, se_counters) = (se.head_total(), se.counters());
    let (mask, decision) = se.finish()?;

    let (l64, d64, side) = (l as u64, d_h as u64, (l / 2) as u64);
    let frac_demand = 4 * d64 * side + 4 * d64 * side * side;
    let v_demand = 2 * l64 * d64;
    let mut c = SimCounters {
        tile_steps: int_pass.tile_steps,
        macs_integer: int_pass.macs,
        se: se_counters,
        blocks_total: side * side,
        blocks_pruned: mask.pruned_count() as u64,
        elems_demand: 2 * l64 * d64 + frac_demand + v_demand,
        elems_fetched: 2 * l64 * d64,
        elems_written: l64 * d64,
        ..SimCounters::default()
    };

    if decision == HeadDecision::Prune {
        c.heads_pruned = 1;
        c.macs_frac_skipped = 2 * l64 * l64 * d64;
        c.elems_skipped_head = frac_demand + v_demand;
        let report = HeadReport {
            head,
            decision,
            theta_head,
            counters: c,
            softmax_max_abs_error: 0.0,
            output_error_bound: 0.0,
        };
        let output = Matrix::zeros(l, d_h, cfg.format);
        return Ok(HeadSim { output, integer_atten: int_pass.integer_atten, mask, report });
    }

    let masked = mask_integer_scores(&int_pass.integer_atten, &mask);
    let frac = run_frac_pass(&q, &k, &masked, &mask, &qk)?;
    let scores = frac.scores.scaled(d_h);
    let probs = hw_softmax_rows(&scores, &mask, params.pruned_logit);
    let reference = softmax_rows(&scores, &mask, params.pruned_logit);
    let softmax_max_abs_error = probs.max_abs_diff(&reference);
    let participating = match params.pruned_logit {
        PrunedLogit::Exclude => Some(&mask),
        PrunedLogit::Zero => None,
    };
    let av = run_av_pass(&quantize_probs(&probs, cfg.format)?, v_h, &pv, participating)?;

    c.tile_steps += frac.tile_steps + av.tile_steps;
    c.macs_frac1 = frac.macs_frac1;
    c.macs_frac2 = frac.macs_frac2;
    c.macs_frac_skipped = frac.macs_skipped;
    c.macs_av = av.macs;
    c.elems_fetched += frac.traffic.q_fetched + frac.traffic.k_fetched + v_demand;
    c.elems_skipped_fum = frac.traffic.q_skipped + frac.traffic.k_skipped;
    let report = HeadReport {
        head,
        decision,
        theta_head,
        counters: c,
        softmax_max_abs_error,
        output_error_bound: output_error_bounds(v_h).into_iter().fold(0.0, f64::max),
    };
    Ok(HeadSim { output: av.output, integer_atten: int_pass.integer_atten, mask, report })
}

/// Simulates every head in order and assembles the layer report.
pub fn simulate_layer(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    params: &PruneParams,
    cfg: &AttentionConfig,
) -> Result<SimOutcome> {
    cfg.check_inputs(q, k, v)?;
    cfg.require_blocked()?;
    let heads = (0..cfg.heads)
        .map(|h| {
            let slice = |m: &Matrix| m.head(h, cfg.heads).map(|v| v.to_matrix());
            simulate_head(h, &slice(q)?, &slice(k)?, &slice(v)?, params, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let output = Matrix::concat_cols(&heads.iter().map(|h| h.output.clone()).collect::<Vec<_>>())?;
    let mut total = SimCounters::default();
    for h in &heads {
        total += h.report.counters;
    }
    let report = SimReport { format: cfg.format, heads: heads.iter().map(|h| h.report.clone()).collect(), total };
    Ok(SimOutcome { output, heads, report })
}
