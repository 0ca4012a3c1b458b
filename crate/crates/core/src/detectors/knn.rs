use crate::error::{CtadError, Result};
use crate::matrix::{squared_distance, Matrix};

/// Distance to the k-th nearest training point, by exhaustive search.
#[derive(Debug, Clone)]
pub struct Knn {
    train: Matrix,
    k: usize,
}

impl Knn {
    pub fn fit(train: &Matrix, k: usize) -> Result<Self> {
        if k == 0 || k > train.rows() {
            return Err(CtadError::OutOfRange {
                what: "knn k",
                got: k,
                min: 1,
                max: train.rows(),
            });
        }
        Ok(Self {
            train: train.clone(),
            k,
        })
    }

    pub fn dim(&self) -> usize {
        self.train.cols()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mut d: Vec<f64> = self.train.iter_rows().map(|t| squared_distance(x, t)).collect();
        let (_, kth, _) = d.select_nth_unstable_by(self.k - 1, f64::total_cmp);
        kth.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let m = Knn::fit(&Matrix::column(&[0.0, 10.0]), 1).unwrap();
        assert_eq!(m.score(&[4.0]), 4.0);
        assert_eq!(m.score(&[10.0]), 0.0);

        let m = Knn::fit(&Matrix::column(&[0.0, 1.0, 2.0]), 3).unwrap();
        assert_eq!(m.score(&[0.0]), 2.0);

        assert!(Knn::fit(&Matrix::column(&[0.0]), 2).is_err());
        assert!(Knn::fit(&Matrix::column(&[0.0]), 0).is_err());
    }

    #[test]
    fn grows_moving_away() {
        let m = Knn::fit(&Matrix::column(&[0.0, 1.0, 3.0, 4.0]), 2).unwrap();
        let scores: Vec<f64> = (0..20).map(|i| m.score(&[4.5 + f64::from(i)])).collect();
        assert!(scores.windows(2).all(|w| w[1] > w[0]));
    }
}
