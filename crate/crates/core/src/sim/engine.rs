//! Sparsity engine: consumes block importances from the PE array, emits a
//! mask row per `END_R` and latches the head decision on `END_H`.

use crate::error::{Error, Result};
use crate::hdp::{head_decision, row_threshold, BlockMask, HeadDecision, RowStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeEvent {
    Importance { row: usize, col: usize, theta: i64 },
    EndRow(usize),
    EndHead,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeCounters {
    pub importance: u64,
    pub end_r: u64,
    pub end_h: u64,
}

#[derive(Debug, Clone, Copy)]
struct RunningRow {
    min: i64,
    max: i64,
    sum: i64,
    count: usize,
    ended: bool,
}

#[derive(Debug, Clone)]
pub struct SparsityEngine {
    side: usize,
    rho_b: f64,
    tau_h: f64,
    theta: Vec<Option<i64>>,
    rows: Vec<RunningRow>,
    mask: BlockMask,
    head_total: i64,
    decision: Option<HeadDecision>,
    counters: SeCounters,
}

impl SparsityEngine {
    pub fn new(side: usize, rho_b: f64, tau_h: f64) -> Result<Self> {
        if side == 0 {
            return Err(Error::Config("sparsity engine needs at least one block".into()));
        }
        // Reject a bad ratio up front rather than at the first END_R.
        row_threshold(&RowStats { min: 0, max: 0, sum: 0, count: 1 }, rho_b)?;
        let empty = RunningRow { min: i64::MAX, max: i64::MIN, sum: 0, count: 0, ended: false };
        Ok(SparsityEngine {
            side,
            rho_b,
            tau_h,
            theta: vec![None; side * side],
            rows: vec![empty; side],
            mask: BlockMask::all_kept(side),
            head_total: 0,
            decision: None,
            counters: SeCounters::default(),
        })
    }

    pub fn step(&mut self, event: SeEvent) -> Result<()> {
        if self.decision.is_some() {
            return Err(protocol(format!("{event:?} after END_H")));
        }
        match event {
            SeEvent::Importance { row, col, theta } => {
                if row >= self.side || col >= self.side {
                    return Err(protocol(format!("importance for block ({row}, {col}) outside {0}x{0}", self.side)));
                }
                if theta < 0 {
                    return Err(protocol(format!("negative importance {theta}")));
                }
                let r = &mut self.rows[row];
                if r.ended {
                    return Err(protocol(format!("importance for row {row} after its END_R")));
                }
                let slot = &mut self.theta[row * self.side + col];
                if slot.is_some() {
                    return Err(protocol(format!("duplicate importance for block ({row}, {col})")));
                }
                *slot = Some(theta);
                r.min = r.min.min(theta);
                r.max = r.max.max(theta);
                r.sum += theta;
                r.count += 1;
                self.head_total += theta;
                self.counters.importance += 1;
            }
            SeEvent::EndRow(row) => {
                if row >= self.side {
                    return Err(protocol(format!("END_R for row {row} outside {} rows", self.side)));
                }
                let r = self.rows[row];
                if r.ended {
                    return Err(protocol(format!("duplicate END_R for row {row}")));
                }
                if r.count == 0 {
                    return Err(protocol(format!("END_R for row {row} before any importance")));
                }
                if r.count != self.side {
                    return Err(protocol(format!("END_R for row {row} after {} of {} importances", r.count, self.side)));
                }
                let stats = RowStats { min: r.min, max: r.max, sum: r.sum, count: r.count };
                let threshold = row_threshold(&stats, self.rho_b)?;
                for col in 0..self.side {
                    let theta = self.theta[row * self.side + col].expect("row complete");
                    self.mask.set(row, col, !threshold.prunes(theta));
                }
                self.rows[row].ended = true;
                self.counters.end_r += 1;
            }
            SeEvent::EndHead => {
                if let Some(row) = self.rows.iter().position(|r| !r.ended) {
                    return Err(protocol(format!("END_H before END_R of row {row}")));
                }
                self.decision = Some(head_decision(self.head_total, self.tau_h));
                self.counters.end_h += 1;
            }
        }
        Ok(())
    }

    /// Mask row as emitted, if its END_R has been seen.
    pub fn mask_row(&self, row: usize) -> Option<&[bool]> {
        self.rows.get(row).filter(|r| r.ended).map(|_| self.mask.row(row))
    }

    pub fn decision(&self) -> Option<HeadDecision> {
        self.decision
    }

    pub fn head_total(&self) -> i64 {
        self.head_total
    }

    pub fn counters(&self) -> SeCounters {
        self.counters
    }

    /// Mask and head decision, once END_H has been processed.
    pub fn finish(self) -> Result<(BlockMask, HeadDecision)> {
        match self.decision {
            Some(d) => Ok((self.mask, d)),
            None => Err(protocol("head not finished: END_H missing".into())),
        }
    }
}

fn protocol(msg: String) -> Error {
    Error::Protocol(msg)
}
