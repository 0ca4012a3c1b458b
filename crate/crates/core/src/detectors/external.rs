use std::path::Path;

use crate::error::{CtadError, Result};

/// Scores produced by an outside detector, replayed row by row.
///
/// The file holds one decimal number per line, aligned with the test split
/// order (`split --emit-order`). Blank lines are ignored.
#[derive(Debug, Clone)]
pub struct ExternalScores {
    scores: Vec<f64>,
    dim: usize,
}

impl ExternalScores {
    pub fn load(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CtadError::io(path, e))?;
        Self::parse(&text, dim)
    }

    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let mut scores = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| CtadError::NonNumeric {
                line: i as u64 + 1,
                column: 0,
                name: "score".into(),
                value: line.to_string(),
            })?;
            if !v.is_finite() {
                return Err(CtadError::NonFinite {
                    line: i as u64 + 1,
                    column: 0,
                    value: v,
                });
            }
            scores.push(v);
        }
        Ok(Self { scores, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn replay(&self, rows: usize) -> Result<Vec<f64>> {
        if rows != self.scores.len() {
            return Err(CtadError::LengthMismatch {
                left: self.scores.len(),
                right: rows,
            });
        }
        Ok(self.scores.clone())
    }
}
