//! Fixtures shared by the benchmarks.

use ctad::calibrate::ReferenceSet;
use ctad::seed::{derive_seed, rng};
use ctad::{fit_kmeans, CentroidSet, KMeansParams, Matrix};
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut r)).collect();
    Matrix::new(rows, cols, data).expect("shape matches")
}

/// A fitted transport problem: references, centroids and a batch of probes.
pub struct OtFixture {
    pub references: Matrix,
    pub centroids: CentroidSet,
    pub probes: Matrix,
}

impl OtFixture {
    pub fn new(m: usize, k: usize, dim: usize, seed: u64) -> Self {
        let train = gaussian(500.max(4 * (m + k)), dim, derive_seed(seed, "train"));
        let centroids = fit_kmeans(
            &train,
            &KMeansParams {
                k,
                seed: derive_seed(seed, "kmeans"),
                ..Default::default()
            },
        )
        .expect("valid kmeans parameters");
        let references = ReferenceSet::sample(&train, m, derive_seed(seed, "references"))
            .expect("enough training rows")
            .points;
        Self {
            references,
            centroids,
            probes: gaussian(64, dim, derive_seed(seed, "probes")),
        }
    }
}
