//! Detection metrics and the paired significance test used in reports.

use serde::{Deserialize, Serialize};

use crate::error::{CtadError, Result};
use crate::stats::student_t_sf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub mean_diff: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub df: usize,
    pub win_count: usize,
    pub n: usize,
}

/// Class-conditional mean transport cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub mean_ot_normal: f64,
    pub mean_ot_anomaly: f64,
    /// `100 (anomaly - normal) / normal`; `None` when the normal mean is 0.
    pub increase_pct: Option<f64>,
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(CtadError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=scores.len() {
        if i == scores.len() || scores[i] != scores[start] {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

fn sorted_desc(scores: &[f64], labels: &[u8]) -> (Vec<f64>, Vec<u8>) {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    (
        idx.iter().map(|&i| scores[i]).collect(),
        idx.iter().map(|&i| labels[i]).collect(),
    )
}

/// Mann-Whitney AUC: fraction of (anomaly, normal) pairs ranked correctly,
/// with ties counting one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(CtadError::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(CtadError::InvalidParameter("NaN score".into()));
    }
    let (s, l) = sorted_desc(scores, labels);
    // Twice the concordant-pair count, so ties stay integral.
    let mut twice: u64 = 0;
    let mut neg_below = n_neg as u64;
    for g in tie_groups(&s) {
        let pos = l[g.clone()].iter().filter(|&&x| x == 1).count() as u64;
        let neg = g.len() as u64 - pos;
        neg_below -= neg;
        twice += 2 * pos * neg_below + pos * neg;
    }
    Ok((twice as f64 / 2.0) / (n_pos as f64 * n_neg as f64))
}

/// Average precision: sum over thresholds of recall gain times precision,
/// with tied scores forming a single threshold.
pub fn auc_pr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    if n_pos == 0 {
        return Err(CtadError::SingleClass {
            positives: 0,
            negatives: n_neg,
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(CtadError::InvalidParameter("NaN score".into()));
    }
    let (s, l) = sorted_desc(scores, labels);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for g in tie_groups(&s) {
        let pos = l[g.clone()].iter().filter(|&&x| x == 1).count();
        tp += pos;
        fp += g.len() - pos;
        if pos > 0 {
            ap += (pos as f64 / n_pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<EvalResult> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    Ok(EvalResult {
        auc_roc: auc_roc(scores, labels)?,
        auc_pr: auc_pr(scores, labels)?,
        n_pos,
        n_neg,
    })
}

/// One-tailed paired t-test of `mean(after - before) > 0`.
pub fn paired_t_test_one_tailed(after: &[f64], before: &[f64]) -> Result<PairedTestResult> {
    if after.len() != before.len() {
        return Err(CtadError::LengthMismatch {
            left: after.len(),
            right: before.len(),
        });
    }
    let n = after.len();
    if n < 2 {
        return Err(CtadError::OutOfRange {
            what: "paired sample count",
            got: n,
            min: 2,
            max: usize::MAX,
        });
    }
    let diffs: Vec<f64> = after.iter().zip(before).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let win_count = diffs.iter().filter(|&&d| d > 0.0).count();
    let df = n - 1;

    let (t_stat, p_value) = if sd == 0.0 {
        let p = if mean > 0.0 {
            0.0
        } else if mean < 0.0 {
            1.0
        } else {
            0.5
        };
        let t = if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        };
        (t, p)
    } else {
        let t = mean / (sd / nf.sqrt());
        (t, student_t_sf(t, df as f64))
    };
    Ok(PairedTestResult {
        mean_diff: mean,
        t_stat,
        p_value,
        df,
        win_count,
        n,
    })
}

pub fn gap_report(ot_values: &[f64], labels: &[u8]) -> Result<GapReport> {
    let (n_pos, n_neg) = class_counts(ot_values, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(CtadError::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    let mean_of = |class: u8, count: usize| {
        ot_values
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(v, _)| v)
            .sum::<f64>()
            / count as f64
    };
    let normal = mean_of(0, n_neg);
    let anomaly = mean_of(1, n_pos);
    Ok(GapReport {
        mean_ot_normal: normal,
        mean_ot_anomaly: anomaly,
        increase_pct: (normal > 0.0).then(|| 100.0 * (anomaly - normal) / normal),
    })
}
