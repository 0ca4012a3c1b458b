use crate::error::{CtadError, Result};
use crate::matrix::Matrix;

/// Empirical-CDF tail scoring, one feature at a time.
///
/// For feature `j` with training ECDF `F`, the left-tail term is
/// `-ln F(x_j)` and the right-tail term is `-ln(1 - F(x_j) + 1/N)`, with
/// probabilities floored at `1/N`. The skew-aware aggregate takes the right
/// tail on features with nonnegative training skewness and the left tail
/// otherwise. The score is the largest of the three sums.
#[derive(Debug, Clone)]
pub struct Ecod {
    sorted: Vec<Vec<f64>>,
    right_skewed: Vec<bool>,
    n: usize,
}

impl Ecod {
    pub fn fit(train: &Matrix) -> Result<Self> {
        if train.is_empty() {
            return Err(CtadError::Empty("ECOD needs at least one training row"));
        }
        let n = train.rows();
        let mut sorted = Vec::with_capacity(train.cols());
        let mut right_skewed = Vec::with_capacity(train.cols());
        for j in 0..train.cols() {
            let mut col: Vec<f64> = train.iter_rows().map(|r| r[j]).collect();
            right_skewed.push(sample_skewness(&col) >= 0.0);
            col.sort_by(f64::total_cmp);
            sorted.push(col);
        }
        Ok(Self {
            sorted,
            right_skewed,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.sorted.len()
    }

    /// Per-feature tail sums `(left, right, auto)`.
    pub fn tail_scores(&self, x: &[f64]) -> (f64, f64, f64) {
        let n = self.n as f64;
        let floor = 1.0 / n;
        let (mut left, mut right, mut auto) = (0.0, 0.0, 0.0);
        for ((col, &v), &skew_right) in self.sorted.iter().zip(x).zip(&self.right_skewed) {
            let cdf = col.partition_point(|&t| t <= v) as f64 / n;
            let l = -cdf.max(floor).ln();
            let r = -(1.0 - cdf + floor).max(floor).ln();
            left += l;
            right += r;
            auto += if skew_right { r } else { l };
        }
        (left, right, auto)
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let (l, r, a) = self.tail_scores(x);
        l.max(r).max(a)
    }
}

/// Adjusted Fisher-Pearson skewness; 0 when undefined.
fn sample_skewness(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var <= 0.0 {
        return 0.0;
    }
    let s = var.sqrt();
    let cubes: f64 = xs.iter().map(|x| ((x - mean) / s).powi(3)).sum();
    nf / ((nf - 1.0) * (nf - 2.0)) * cubes
}
