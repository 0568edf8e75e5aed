use crate::error::{Error, Result};
use crate::tensorio::{Matrix, WideMatrix};

/// `IQ · IK^T` in integer units. Both operands must be integer-valued planes.
pub fn integer_score(iq: &Matrix, ik: &Matrix) -> Result<WideMatrix> {
    if iq.cols() != ik.cols() {
        return Err(Error::Shape(format!("IQ has {} columns, IK has {}", iq.cols(), ik.cols())));
    }
    if iq.format() != ik.format() {
        return Err(Error::Shape(format!("IQ is {}, IK is {}", iq.format(), ik.format())));
    }
    if !iq.is_integer_valued() || !ik.is_integer_valued() {
        return Err(Error::Precondition("integer_score needs integer-valued operands".into()));
    }
    let shift = iq.format().frac_bits();
    let units = |m: &Matrix| m.raws().iter().map(|&r| (r as i64) >> shift).collect::<Vec<_>>();
    let (a, b) = (units(iq), units(ik));
    let d = iq.cols();
    let mut out = WideMatrix::zeros(iq.rows(), ik.rows());
    for i in 0..iq.rows() {
        let qa = &a[i * d..(i + 1) * d];
        for j in 0..ik.rows() {
            let kb = &b[j * d..(j + 1) * d];
            out.set(i, j, qa.iter().zip(kb).map(|(x, y)| x * y).sum());
        }
    }
    Ok(out)
}

/// Minimum, maximum and sum of the block importances of one block-row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowStats {
    pub min: i64,
    pub max: i64,
    pub sum: i64,
    pub count: usize,
}

impl RowStats {
    pub fn from_values(values: &[i64]) -> Self {
        RowStats {
            min: values.iter().copied().min().unwrap_or(0),
            max: values.iter().copied().max().unwrap_or(0),
            sum: values.iter().sum(),
            count: values.len(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }
}

/// Per-block importance grid with row statistics and the head total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockImportance {
    side: usize,
    theta: Vec<i64>,
    rows: Vec<RowStats>,
    head_total: i64,
}

impl BlockImportance {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn theta(&self, i: usize, j: usize) -> i64 {
        self.theta[i * self.side + j]
    }

    pub fn theta_row(&self, i: usize) -> &[i64] {
        &self.theta[i * self.side..(i + 1) * self.side]
    }

    pub fn row_stats(&self, i: usize) -> RowStats {
        self.rows[i]
    }

    /// Sum of every block importance in the head.
    pub fn head_total(&self) -> i64 {
        self.head_total
    }
}

/// Absolute sum of every 2x2 block, plus per-row min/max/sum and the head total.
pub fn block_importance(integer_atten: &WideMatrix) -> Result<BlockImportance> {
    let l = integer_atten.rows();
    if l != integer_atten.cols() || l % 2 != 0 || l == 0 {
        return Err(Error::Shape(format!(
            "integer scores must be square with even side, got {}x{}",
            l,
            integer_atten.cols()
        )));
    }
    let side = l / 2;
    let mut theta = Vec::with_capacity(side * side);
    for bi in 0..side {
        let (top, bottom) = (integer_atten.row(2 * bi), integer_atten.row(2 * bi + 1));
        for bj in 0..side {
            let c = 2 * bj;
            theta.push(top[c].abs() + top[c + 1].abs() + bottom[c].abs() + bottom[c + 1].abs());
        }
    }
    let rows: Vec<RowStats> = theta.chunks(side).map(RowStats::from_values).collect();
    let head_total = rows.iter().map(|r| r.sum).sum();
    Ok(BlockImportance { side, theta, rows, head_total })
}

/// Zeroes the entries of pruned blocks.
pub fn mask_integer_scores(integer_atten: &WideMatrix, mask: &super::BlockMask) -> WideMatrix {
    let mut out = integer_atten.clone();
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            if !mask.keeps_entry(r, c) {
                out.set(r, c, 0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fxp::FxpFormat;

    fn ints(rows: usize, cols: usize, v: &[i64]) -> Matrix {
        let one = FxpFormat::Q8_8.one_raw();
        Matrix::new(rows, cols, FxpFormat::Q8_8, v.iter().map(|x| (x * one) as i32).collect()).unwrap()
    }

    #[test]
    fn identity_rows_select_key_columns() {
        let iq = ints(2, 3, &[1, 0, 0, 0, 0, 1]);
        let ik = ints(2, 3, &[4, 5, 6, -7, 8, 9]);
        let s = integer_score(&iq, &ik).unwrap();
        assert_eq!(s.data(), &[4, -7, 6, 9]);
    }

    #[test]
    fn rejects_fractional_and_mismatched() {
        let frac = Matrix::from_reals(1, 2, &[0.5, 1.0], FxpFormat::Q8_8).unwrap();
        let ok = ints(1, 2, &[1, 1]);
        assert!(matches!(integer_score(&frac, &ok), Err(Error::Precondition(_))));
        assert!(matches!(integer_score(&ok, &ints(1, 3, &[1, 1, 1])), Err(Error::Shape(_))));
    }

    #[test]
    fn sub_unit_inputs_give_zero_scores() {
        let q = Matrix::from_reals(2, 2, &[0.9, -0.99, 0.5, -0.1], FxpFormat::Q8_8).unwrap().split();
        let k = Matrix::from_reals(2, 2, &[-0.7, 0.3, 0.2, 0.999], FxpFormat::Q8_8).unwrap().split();
        assert!(integer_score(&q.int, &k.int).unwrap().is_zero());
    }

    #[test]
    fn block_theta_is_abs_sum() {
        let s = WideMatrix::from_vec(2, 2, vec![1, -2, 3, -4]).unwrap();
        let imp = block_importance(&s).unwrap();
        assert_eq!(imp.theta(0, 0), 10);
        assert_eq!(imp.head_total(), 10);
        let z = block_importance(&WideMatrix::zeros(4, 4)).unwrap();
        assert_eq!(z.head_total(), 0);
        assert!((0..2).all(|i| z.theta_row(i).iter().all(|&t| t == 0)));
        assert!(block_importance(&WideMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn row_stats_consistent() {
        let s = WideMatrix::from_vec(
            4,
            4,
            vec![1, 1, 0, 0, 1, 1, 0, -3, 5, 0, 2, 2, 0, 0, 2, 2],
        )
        .unwrap();
        let imp = block_importance(&s).unwrap();
        assert_eq!(imp.theta_row(0), &[4, 3]);
        assert_eq!(imp.row_stats(0), RowStats { min: 3, max: 4, sum: 7, count: 2 });
        assert_eq!(imp.theta_row(1), &[5, 8]);
        assert_eq!(imp.head_total(), 20);
    }
}
