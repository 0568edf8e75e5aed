//! Matrix containers, deterministic synthetic tensors and the HDPT file format.

mod hdpt;
mod synth;

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::fxp::{quantize, FxpError, FxpFormat, FxpValue};

pub use hdpt::{decode_tensor, encode_tensor, load_tensor, load_tensor_expecting, save_tensor, HDPT_MAGIC, HDPT_VERSION};
pub use synth::{gen_synthetic, sample_reals, splitmix64_at, uniform_at, Distribution};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Fxp(#[from] FxpError),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("bad magic: file does not start with \"HDPT\"")]
    BadMagic,
    #[error("unsupported HDPT version {found} (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("trailing data: {extra} bytes after payload")]
    TrailingData { extra: usize },
    #[error("format mismatch: {0}")]
    FormatMismatch(String),
    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: io::Error },
}

impl TensorError {
    /// Stable short identifier of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            TensorError::Shape(_) => "shape",
            TensorError::Fxp(_) => "fxp",
            TensorError::InvalidDistribution(_) => "invalid_distribution",
            TensorError::BadMagic => "bad_magic",
            TensorError::VersionMismatch { .. } => "version_mismatch",
            TensorError::TruncatedPayload { .. } => "truncated_payload",
            TensorError::TrailingData { .. } => "trailing_data",
            TensorError::FormatMismatch(_) => "format_mismatch",
            TensorError::Io { .. } => "io",
        }
    }
}

/// Dense row-major matrix of fixed-point values sharing one format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    format: FxpFormat,
    data: Vec<i32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, format: FxpFormat, data: Vec<i32>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(&raw) = data.iter().find(|&&r| !format.contains_raw(r as i64)) {
            return Err(FxpError::RawOutOfRange { raw: raw as i64, format }.into());
        }
        Ok(Matrix { rows, cols, format, data })
    }

    pub fn zeros(rows: usize, cols: usize, format: FxpFormat) -> Self {
        Matrix { rows, cols, format, data: vec![0; rows * cols] }
    }

    /// Quantizes row-major reals.
    pub fn from_reals(rows: usize, cols: usize, values: &[f64], format: FxpFormat) -> Result<Self, TensorError> {
        if values.len() != rows * cols {
            return Err(TensorError::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        let data = values
            .iter()
            .map(|&x| quantize(x, format).map(FxpValue::raw))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix { rows, cols, format, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn format(&self) -> FxpFormat {
        self.format
    }

    pub fn raws(&self) -> &[i32] {
        &self.data
    }

    pub fn raw(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[i32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> FxpValue {
        FxpValue::from_raw(self.raw(r, c) as i64, self.format).expect("validated on construction")
    }

    pub fn to_reals(&self) -> RealMatrix {
        let scale = self.format.scale();
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&r| r as f64 / scale).collect(),
        }
    }

    /// Integer and fractional component planes (truncation-toward-zero split).
    pub fn split(&self) -> SplitMatrix {
        let one = self.format.one_raw() as i32;
        let int: Vec<i32> = self.data.iter().map(|&r| r / one * one).collect();
        let frac = self.data.iter().zip(&int).map(|(&r, &i)| r - i).collect();
        SplitMatrix {
            int: Matrix { rows: self.rows, cols: self.cols, format: self.format, data: int },
            frac: Matrix { rows: self.rows, cols: self.cols, format: self.format, data: frac },
        }
    }

    pub fn is_integer_valued(&self) -> bool {
        let one = self.format.one_raw() as i32;
        self.data.iter().all(|r| r % one == 0)
    }

    /// Column slice for one head when the columns are split into `heads` equal chunks.
    pub fn head(&self, head_id: usize, heads: usize) -> Result<HeadView<'_>, TensorError> {
        if heads == 0 || self.cols % heads != 0 {
            return Err(TensorError::Shape(format!("{} columns not divisible into {heads} heads", self.cols)));
        }
        if head_id >= heads {
            return Err(TensorError::Shape(format!("head {head_id} out of range for {heads} heads")));
        }
        Ok(HeadView { parent: self, head_id, d_h: self.cols / heads })
    }

    /// Concatenates equally tall matrices column-wise.
    pub fn concat_cols(parts: &[Matrix]) -> Result<Matrix, TensorError> {
        let first = parts.first().ok_or_else(|| TensorError::Shape("nothing to concatenate".into()))?;
        let rows = first.rows;
        let format = first.format;
        if parts.iter().any(|p| p.rows != rows || p.format != format) {
            return Err(TensorError::Shape("concatenated parts differ in rows or format".into()));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix { rows, cols, format, data })
    }

    /// Decimal reals, one matrix row per line.
    pub fn to_csv(&self) -> String {
        self.to_reals().to_csv()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TensorError> {
        std::fs::write(path, self.to_csv()).map_err(|source| TensorError::Io { path: path.to_path_buf(), source })
    }
}

/// Integer and fractional planes of a matrix; `int + frac` reconstructs it exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMatrix {
    pub int: Matrix,
    pub frac: Matrix,
}

impl SplitMatrix {
    pub fn rows(&self) -> usize {
        self.int.rows
    }

    pub fn cols(&self) -> usize {
        self.int.cols
    }

    pub fn format(&self) -> FxpFormat {
        self.int.format
    }

    /// Integer plane in integer units (raw divided by `2^frac_bits`).
    pub fn int_units(&self, r: usize, c: usize) -> i64 {
        self.int.raw(r, c) as i64 >> self.format().frac_bits()
    }
}

/// Borrowed column slice `[head_id * d_h, (head_id + 1) * d_h)`.
#[derive(Debug, Clone, Copy)]
pub struct HeadView<'a> {
    parent: &'a Matrix,
    head_id: usize,
    d_h: usize,
}

impl<'a> HeadView<'a> {
    pub fn head_id(&self) -> usize {
        self.head_id
    }

    pub fn d_h(&self) -> usize {
        self.d_h
    }

    pub fn rows(&self) -> usize {
        self.parent.rows
    }

    pub fn raw(&self, r: usize, c: usize) -> i32 {
        self.parent.raw(r, self.head_id * self.d_h + c)
    }

    pub fn to_matrix(&self) -> Matrix {
        let offset = self.head_id * self.d_h;
        let mut data = Vec::with_capacity(self.parent.rows * self.d_h);
        for r in 0..self.parent.rows {
            data.extend_from_slice(&self.parent.row(r)[offset..offset + self.d_h]);
        }
        Matrix { rows: self.parent.rows, cols: self.d_h, format: self.parent.format, data }
    }
}

/// Dense row-major matrix of reals, used by the reference paths.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn cols_slice(&self, start: usize, width: usize) -> RealMatrix {
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        RealMatrix { rows: self.rows, cols: width, data }
    }

    pub fn concat_cols(parts: &[RealMatrix]) -> Result<RealMatrix, TensorError> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(TensorError::Shape("concatenated parts differ in rows".into()));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn max_abs_diff(&self, other: &RealMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn mean_abs_diff(&self, other: &RealMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / self.data.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Widened accumulator matrix (e.g. integer scores or product-scale score sums).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WideMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl WideMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        WideMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::Shape(format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len())));
        }
        Ok(WideMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_at(&mut self, r: usize, c: usize, v: i64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}
