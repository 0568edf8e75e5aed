//! `P·V` on the PE array. Both operands are split; the first PE row computes
//! `IP·IV` (PEs 0-1) and `IP·FV` (PEs 2-3), the second row `FP·IV` and
//! `FP·FV`. Each PE of a pair covers four of the eight C-tile columns.

use super::tiling::{TileSchedule, TILE_COLS, TILE_DEPTH, TILE_ROWS};
use crate::error::{Error, Result};
use crate::fxp::shift_round_even;
use crate::hdp::BlockMask;
use crate::tensorio::Matrix;

/// Quadrant order: `IP·IV`, `IP·FV`, `FP·IV`, `FP·FV`.
pub const QUADRANTS: [&str; 4] = ["ii", "if", "fi", "ff"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvPass {
    pub output: Matrix,
    pub macs: [u64; 4],
    pub tile_steps: u64,
    /// Raw quadrant sums before the adder, row-major, per quadrant.
    pub quadrant_acc: [Vec<i64>; 4],
}

/// `participating` limits the probability entries that take part; `None` means all.
pub fn run_av_pass(p: &Matrix, v: &Matrix, schedule: &TileSchedule, participating: Option<&BlockMask>) -> Result<AvPass> {
    let (l, d) = (p.rows(), v.cols());
    if p.cols() != v.rows() || p.format() != v.format() || schedule.n != l || schedule.d != p.cols() || schedule.m != d {
        return Err(Error::Shape(format!(
            "P {}x{} and V {}x{} do not match the {}x{}x{} schedule",
            l,
            p.cols(),
            v.rows(),
            d,
            schedule.n,
            schedule.d,
            schedule.m
        )));
    }
    if let Some(mask) = participating {
        if mask.side() * 2 != l || p.cols() != l {
            return Err(Error::Shape(format!("{0}x{0} mask does not cover a {l}x{l} P", mask.side())));
        }
    }
    let fmt = p.format();
    let (ps, vs) = (p.split(), v.split());
    let planes_p = [ps.int.raws(), ps.int.raws(), ps.frac.raws(), ps.frac.raws()];
    let planes_v = [vs.int.raws(), vs.frac.raws(), vs.int.raws(), vs.frac.raws()];
    let n = p.cols();
    let mut acc: [Vec<i64>; 4] = std::array::from_fn(|_| vec![0i64; l * d]);
    let mut macs = [0u64; 4];
    for step in schedule.steps() {
        for q in 0..4 {
            let (pp, vv) = (planes_p[q], planes_v[q]);
            for r in step.i..step.i + TILE_ROWS {
                for t in step.k..step.k + TILE_DEPTH {
                    if participating.is_some_and(|m| !m.keeps_entry(r, t)) {
                        continue;
                    }
                    let a = pp[r * n + t] as i64;
                    for c in step.j..step.j + TILE_COLS {
                        acc[q][r * d + c] += a * vv[t * d + c] as i64;
                    }
                    macs[q] += TILE_COLS as u64;
                }
            }
        }
    }
    let shift = fmt.frac_bits() as u32;
    let raws = (0..l * d)
        .map(|i| fmt.saturate(shift_round_even(acc.iter().map(|a| a[i]).sum(), shift)) as i32)
        .collect();
    Ok(AvPass {
        output: Matrix::new(l, d, fmt, raws)?,
        macs,
        tile_steps: schedule.len() as u64,
        quadrant_acc: acc,
    })
}
