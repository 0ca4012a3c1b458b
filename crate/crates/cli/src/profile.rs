use std::time::Instant;

use ctad::calibrate::ReferenceSet;
use ctad::seed::{derive_seed, rng};
use ctad::{fit_kmeans, ot, KMeansParams, Matrix};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub m: usize,
    pub k: usize,
    pub dim: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut r)).collect();
    Matrix::new(rows, cols, data).expect("shape matches")
}

/// Times the per-sample transport cost (cost matrix plus solve) on standard
/// normal data against centroids and references fitted on a separate draw.
pub fn profile_ot(m: usize, k: usize, dim: usize, n_samples: usize, seed: u64) -> ctad::Result<ProfileSummary> {
    if n_samples == 0 {
        return Err(ctad::CtadError::Empty("profile needs at least one sample"));
    }
    let n_train = (4 * (m + k)).max(500);
    let train = gaussian(n_train, dim, derive_seed(seed, "profile-train"));
    let q = fit_kmeans(
        &train,
        &KMeansParams {
            k,
            seed: derive_seed(seed, "kmeans"),
            ..Default::default()
        },
    )?;
    let refs = ReferenceSet::sample(&train, m, derive_seed(seed, "references"))?;
    let test = gaussian(n_samples, dim, derive_seed(seed, "profile-test"));

    let mut times = Vec::with_capacity(n_samples);
    let mut sink = 0.0;
    for x in test.iter_rows() {
        let t = Instant::now();
        sink += ot::ot_distance(&refs.points, x, &q)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    std::hint::black_box(sink);
    times.sort_by(f64::total_cmp);
    Ok(ProfileSummary {
        m,
        k,
        dim,
        n_samples,
        seed,
        median_ms: quantile(&times, 0.5),
        p95_ms: quantile(&times, 0.95),
        mean_ms: times.iter().sum::<f64>() / n_samples as f64,
        max_ms: times[n_samples - 1],
    })
}

/// Linear interpolation between order statistics of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
