use crate::error::{Error, Result};

/// Rows of an A tile and of a C tile.
pub const TILE_ROWS: usize = 4;
/// Shared (reduction) extent of an A tile and a B tile.
pub const TILE_DEPTH: usize = 4;
/// Columns of a B tile and of a C tile.
pub const TILE_COLS: usize = 8;

/// One tile step: A tile at `(i, k)`, B tile at `(k, j)`, C tile at `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileStep {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl TileStep {
    /// Last reduction step of its C tile.
    pub fn completes(&self, depth: usize) -> bool {
        self.k + TILE_DEPTH == depth
    }
}

/// Output-stationary schedule for `C (N x M) = A (N x D) · B (D x M)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSchedule {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    steps: Vec<TileStep>,
}

impl TileSchedule {
    pub fn steps(&self) -> &[TileStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// MACs the PE array performs for the whole dense product.
    pub fn dense_macs(&self) -> u64 {
        (self.n * self.m * self.d) as u64
    }
}

/// Loop nest `for i in (0..N).step_by(4) { for j in (0..M).step_by(8) { for k in (0..D).step_by(4) } }`.
pub fn schedule_tiles(rows_a: usize, cols_a: usize, cols_b: usize) -> Result<TileSchedule> {
    if rows_a == 0 || cols_a == 0 || cols_b == 0 {
        return Err(Error::Shape("cannot tile an empty product".into()));
    }
    if rows_a % TILE_ROWS != 0 || cols_a % TILE_DEPTH != 0 || cols_b % TILE_COLS != 0 {
        return Err(Error::Shape(format!(
            "{rows_a}x{cols_a} times {cols_a}x{cols_b} is not a multiple of the {TILE_ROWS}x{TILE_DEPTH} / {TILE_DEPTH}x{TILE_COLS} tiles"
        )));
    }
    let mut steps = Vec::with_capacity((rows_a / TILE_ROWS) * (cols_b / TILE_COLS) * (cols_a / TILE_DEPTH));
    for i in (0..rows_a).step_by(TILE_ROWS) {
        for j in (0..cols_b).step_by(TILE_COLS) {
            for k in (0..cols_a).step_by(TILE_DEPTH) {
                steps.push(TileStep { i, j, k });
            }
        }
    }
    Ok(TileSchedule { n: rows_a, m: cols_b, d: cols_a, steps })
}
