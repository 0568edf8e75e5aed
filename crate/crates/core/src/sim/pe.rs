//! 2x4 PE array. During a score pass each PE owns one 2x2 block of the 4x8
//! C tile; when the tile's last reduction step retires it reports the
//! absolute sum of its four accumulators as that block's importance.

use super::engine::SeEvent;
use super::tiling::{TileSchedule, TILE_COLS, TILE_DEPTH, TILE_ROWS};
use crate::error::{Error, Result};
use crate::tensorio::{Matrix, WideMatrix};

pub const PE_ROWS: usize = 2;
pub const PE_COLS: usize = 4;

/// Accumulator bank of one PE: a 2x2 output block, row-major.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeState {
    pub acc: [i64; 4],
    pub macs: u64,
}

impl PeState {
    pub fn importance(&self) -> i64 {
        self.acc.iter().map(|a| a.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerPass {
    /// `IQ·IK^T` in integer units.
    pub integer_atten: WideMatrix,
    /// Importances in completion order, `END_R` after each finished tile row, `END_H` last.
    pub events: Vec<SeEvent>,
    pub macs: u64,
    pub tile_steps: u64,
}

fn units(m: &Matrix) -> Result<Vec<i64>> {
    if !m.is_integer_valued() {
        return Err(Error::Precondition("integer pass needs integer-valued operands".into()));
    }
    let f = m.format().frac_bits();
    Ok(m.raws().iter().map(|&r| (r as i64) >> f).collect())
}

/// Tiled `IQ·IK^T` on the PE array with importance reporting.
pub fn run_integer_pass(iq: &Matrix, ik: &Matrix, schedule: &TileSchedule) -> Result<IntegerPass> {
    let (l, d) = (iq.rows(), iq.cols());
    if ik.rows() != l || ik.cols() != d || schedule.n != l || schedule.m != l || schedule.d != d {
        return Err(Error::Shape(format!(
            "IQ {}x{}, IK {}x{} do not match the {}x{}x{} schedule",
            l,
            d,
            ik.rows(),
            ik.cols(),
            schedule.n,
            schedule.d,
            schedule.m
        )));
    }
    let (a, b) = (units(iq)?, units(ik)?);
    let mut out = WideMatrix::zeros(l, l);
    let mut events = Vec::with_capacity((l / 2) * (l / 2) + l / 2 + 1);
    let mut pes = [[PeState::default(); PE_COLS]; PE_ROWS];
    let mut macs = 0u64;
    for step in schedule.steps() {
        if step.k == 0 {
            pes = [[PeState::default(); PE_COLS]; PE_ROWS];
        }
        for (pr, pe_row) in pes.iter_mut().enumerate() {
            for (pc, pe) in pe_row.iter_mut().enumerate() {
                for (slot, acc) in pe.acc.iter_mut().enumerate() {
                    let r = step.i + 2 * pr + slot / 2;
                    let c = step.j + 2 * pc + slot % 2;
                    for t in step.k..step.k + TILE_DEPTH {
                        *acc += a[r * d + t] * b[c * d + t];
                    }
                }
                pe.macs += 4 * TILE_DEPTH as u64;
            }
        }
        macs += (TILE_ROWS * TILE_COLS * TILE_DEPTH) as u64;
        if step.completes(d) {
            for (pr, pe_row) in pes.iter().enumerate() {
                for (pc, pe) in pe_row.iter().enumerate() {
                    let (r0, c0) = (step.i + 2 * pr, step.j + 2 * pc);
                    for (slot, &acc) in pe.acc.iter().enumerate() {
                        out.set(r0 + slot / 2, c0 + slot % 2, acc);
                    }
                    events.push(SeEvent::Importance { row: r0 / 2, col: c0 / 2, theta: pe.importance() });
                }
            }
            if step.j + TILE_COLS == l {
                events.push(SeEvent::EndRow(step.i / 2));
                events.push(SeEvent::EndRow(step.i / 2 + 1));
            }
        }
    }
    events.push(SeEvent::EndHead);
    Ok(IntegerPass { integer_atten: out, events, macs, tile_steps: schedule.len() as u64 })
}
