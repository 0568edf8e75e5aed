//! Fraction pass: `IQ·FK^T` and `FQ·IK^T` for kept blocks, added to the
//! masked integer scores. Operands of pruned blocks are never fetched.

use super::pe::{PE_COLS, PE_ROWS};
use super::tiling::{TileSchedule, TILE_DEPTH};
use crate::error::{Error, Result};
use crate::hdp::{ApproxScores, BlockMask};
use crate::tensorio::{SplitMatrix, WideMatrix};

/// Element traffic of the fraction pass, in elements of one component plane.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FracTraffic {
    /// `IQ` and `FQ` rows of block-rows with at least one kept block.
    pub q_fetched: u64,
    pub q_skipped: u64,
    /// `IK` and `FK` rows of kept blocks.
    pub k_fetched: u64,
    pub k_skipped: u64,
}

impl FracTraffic {
    pub fn from_mask(mask: &BlockMask, d_h: usize) -> Self {
        let per = 4 * d_h as u64;
        let live_rows = (0..mask.side()).filter(|&i| mask.row_kept(i) > 0).count() as u64;
        let side = mask.side() as u64;
        FracTraffic {
            q_fetched: per * live_rows,
            q_skipped: per * (side - live_rows),
            k_fetched: per * mask.kept_count() as u64,
            k_skipped: per * mask.pruned_count() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FracPass {
    pub scores: ApproxScores,
    pub macs_frac1: u64,
    pub macs_frac2: u64,
    pub macs_skipped: u64,
    pub tile_steps: u64,
    pub traffic: FracTraffic,
}

pub fn run_frac_pass(
    q: &SplitMatrix,
    k: &SplitMatrix,
    integer_atten: &WideMatrix,
    mask: &BlockMask,
    schedule: &TileSchedule,
) -> Result<FracPass> {
    let (l, d) = (q.rows(), q.cols());
    if k.rows() != l
        || k.cols() != d
        || integer_atten.rows() != l
        || integer_atten.cols() != l
        || mask.side() * 2 != l
        || schedule.n != l
        || schedule.m != l
        || schedule.d != d
    {
        return Err(Error::Shape(format!("fraction pass operands do not match l = {l}, d_h = {d}")));
    }
    let shift = 2 * q.format().frac_bits() as u32;
    let (iq, fq, ik, fk) = (q.int.raws(), q.frac.raws(), k.int.raws(), k.frac.raws());
    let mut acc = WideMatrix::zeros(l, l);
    let (mut macs1, mut macs2, mut steps) = (0u64, 0u64, 0u64);
    // Per-PE Frac1 and Frac2 accumulators for the current C tile.
    let mut f1 = [[[0i64; 4]; PE_COLS]; PE_ROWS];
    let mut f2 = f1;
    for step in schedule.steps() {
        let tile_live = (0..PE_ROWS)
            .any(|pr| (0..PE_COLS).any(|pc| mask.get(step.i / 2 + pr, step.j / 2 + pc)));
        if !tile_live {
            continue;
        }
        steps += 1;
        if step.k == 0 {
            f1 = [[[0; 4]; PE_COLS]; PE_ROWS];
            f2 = f1;
        }
        for pr in 0..PE_ROWS {
            for pc in 0..PE_COLS {
                if !mask.get(step.i / 2 + pr, step.j / 2 + pc) {
                    continue;
                }
                for slot in 0..4 {
                    let r = step.i + 2 * pr + slot / 2;
                    let c = step.j + 2 * pc + slot % 2;
                    for t in step.k..step.k + TILE_DEPTH {
                        f1[pr][pc][slot] += iq[r * d + t] as i64 * fk[c * d + t] as i64;
                        f2[pr][pc][slot] += fq[r * d + t] as i64 * ik[c * d + t] as i64;
                    }
                }
                macs1 += 4 * TILE_DEPTH as u64;
                macs2 += 4 * TILE_DEPTH as u64;
            }
        }
        if step.completes(d) {
            // Adder stage: integer score plus both fractions.
            for pr in 0..PE_ROWS {
                for pc in 0..PE_COLS {
                    if !mask.get(step.i / 2 + pr, step.j / 2 + pc) {
                        continue;
                    }
                    for slot in 0..4 {
                        let r = step.i + 2 * pr + slot / 2;
                        let c = step.j + 2 * pc + slot % 2;
                        acc.set(r, c, (integer_atten.get(r, c) << shift) + f1[pr][pc][slot] + f2[pr][pc][slot]);
                    }
                }
            }
        }
    }
    let dense = 2 * (l * l * d) as u64;
    Ok(FracPass {
        scores: ApproxScores::from_acc(acc, q.format().frac_bits()),
        macs_frac1: macs1,
        macs_frac2: macs2,
        macs_skipped: dense - macs1 - macs2,
        tile_steps: steps,
        traffic: FracTraffic::from_mask(mask, d),
    })
}
