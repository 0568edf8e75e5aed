use std::ops::AddAssign;

use serde::Serialize;

/// Work and pruning counters. Sums over heads are plain field-wise additions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PruneStats {
    pub blocks_total: u64,
    pub blocks_pruned: u64,
    pub heads_total: u64,
    pub heads_pruned: u64,
    /// `IQ·IK^T`, charged for every head.
    pub macs_integer: u64,
    /// `IQ·FK^T` plus `FQ·IK^T` over kept blocks of kept heads.
    pub macs_frac_executed: u64,
    pub macs_frac_skipped: u64,
    /// Four quadrant products per probability entry taking part in `P·V`.
    pub macs_av: u64,
    pub k_elements_fetch_skipped: u64,
}

impl PruneStats {
    pub fn block_pruned_fraction(&self) -> f64 {
        ratio(self.blocks_pruned, self.blocks_total)
    }

    pub fn head_pruned_fraction(&self) -> f64 {
        ratio(self.heads_pruned, self.heads_total)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl AddAssign for PruneStats {
    fn add_assign(&mut self, o: Self) {
        self.blocks_total += o.blocks_total;
        self.blocks_pruned += o.blocks_pruned;
        self.heads_total += o.heads_total;
        self.heads_pruned += o.heads_pruned;
        self.macs_integer += o.macs_integer;
        self.macs_frac_executed += o.macs_frac_executed;
        self.macs_frac_skipped += o.macs_frac_skipped;
        self.macs_av += o.macs_av;
        self.k_elements_fetch_skipped += o.k_elements_fetch_skipped;
    }
}

impl std::iter::Sum for PruneStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(PruneStats::default(), |mut acc, s| {
            acc += s;
            acc
        })
    }
}
