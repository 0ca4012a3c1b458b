use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{CtadError, Result};
use crate::matrix::Matrix;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

/// Squared reconstruction error outside the top principal directions.
#[derive(Debug, Clone)]
pub struct Pca {
    mean: Vec<f64>,
    /// Orthonormal principal directions, one per row.
    components: Vec<Vec<f64>>,
    explained: Vec<f64>,
}

impl Pca {
    /// `components` must lie in `1..=min(N-1, D)`. Fewer directions are kept
    /// when the centered data has lower numerical rank.
    pub fn fit(train: &Matrix, components: usize) -> Result<Self> {
        let (n, d) = (train.rows(), train.cols());
        let max = n.saturating_sub(1).min(d);
        if components == 0 || components > max {
            return Err(CtadError::OutOfRange {
                what: "PCA components",
                got: components,
                min: 1,
                max,
            });
        }
        let mean = train.column_means();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for r in train.iter_rows() {
            let z = nalgebra::DVector::from_iterator(d, r.iter().zip(&mean).map(|(x, m)| x - m));
            cov.ger(1.0, &z, &z, 1.0);
        }
        cov /= (n - 1) as f64;

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let top = eig.eigenvalues[order[0]].max(0.0);

        let mut comps = Vec::with_capacity(components);
        let mut explained = Vec::with_capacity(components);
        for &idx in order.iter().take(components) {
            let lambda = eig.eigenvalues[idx];
            if top == 0.0 || lambda <= RANK_TOL * top {
                break;
            }
            let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
            let pivot = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            comps.push(v);
            explained.push(lambda);
        }
        Ok(Self {
            mean,
            components: comps,
            explained,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained
    }

    /// Projection of `x` onto the retained subspace, in input coordinates.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut out = self.mean.clone();
        for v in &self.components {
            let c: f64 = v.iter().zip(&z).map(|(a, b)| a * b).sum();
            for (o, vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
        out
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.reconstruct(x).iter().zip(x).map(|(r, a)| (a - r) * (a - r)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn line_through_origin() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [-1.0, -1.0]]).unwrap();
        let p = Pca::fit(&m, 1).unwrap();
        assert_abs_diff_eq!(p.score(&[1.0, -1.0]), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.score(&p.mean.clone()), 0.0, epsilon = 1e-12);
        // Sign convention: largest loading nonnegative.
        assert!(p.components()[0].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn full_basis_reconstructs_everything() {
        let m = Matrix::from_rows(&[[0.0, 1.0, 2.0], [3.0, 1.0, 0.0], [1.0, 5.0, 2.0], [2.0, 2.0, 9.0]]).unwrap();
        let p = Pca::fit(&m, 3).unwrap();
        for x in [[10.0, -3.0, 4.0], [0.0, 0.0, 0.0]] {
            assert_abs_diff_eq!(p.score(&x), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rank_deficient_and_range() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [3.0, 6.0, 9.0]]).unwrap();
        let p = Pca::fit(&m, 2).unwrap();
        assert_eq!(p.components().len(), 1);
        assert!(Pca::fit(&m, 0).is_err());
        assert!(Pca::fit(&m, 3).is_err());
    }

    proptest! {
        #[test]
        fn projector_is_idempotent(
            rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 6..20),
            x in proptest::collection::vec(-5.0f64..5.0, 4),
            r in 1usize..4,
        ) {
            let m = Matrix::from_rows(&rows).unwrap();
            let p = Pca::fit(&m, r).unwrap();
            let once = p.reconstruct(&x);
            let twice = p.reconstruct(&once);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert_eq!(p.score(&x), p.score(&x));
            prop_assert!(p.score(&x) >= 0.0);
        }
    }
}
