//! Tabular datasets, the one-class train/test split, and z-score scaling.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CtadError, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Columns whose training standard deviation falls below this are only centered.
pub const STD_FLOOR: f64 = 1e-12;

/// Feature matrix plus binary labels (0 normal, 1 anomaly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(CtadError::LengthMismatch {
                left: labels.len(),
                right: features.rows(),
            });
        }
        if let Some(bad) = labels.iter().position(|&l| l > 1) {
            return Err(CtadError::InvalidParameter(format!(
                "label at row {bad} is {}, expected 0 or 1",
                labels[bad]
            )));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            let cols = features.cols().max(1);
            return Err(CtadError::NonFinite {
                line: (pos / cols) as u64,
                column: pos % cols,
                value: features.as_slice()[pos],
            });
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_normal(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }

    pub fn n_anomaly(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Selects the label column by header name or zero-based index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".to_string())
    }
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers are read as indices, anything else as a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(n) => write!(f, "{n}"),
            LabelColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Reads a headed CSV file; the label column is removed from the features.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| CtadError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, label, name)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, label: &LabelColumn, name: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| CtadError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let width = headers.len();
    let label_idx = match label {
        LabelColumn::Name(n) => headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| CtadError::MissingLabelColumn(n.clone()))?,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(CtadError::MissingLabelColumn(i.to_string())),
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CtadError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(CtadError::RaggedRow {
                line,
                expected: width,
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                let l = match cell.parse::<f64>() {
                    Ok(0.0) => 0,
                    Ok(1.0) => 1,
                    _ => {
                        return Err(CtadError::BadLabel {
                            line,
                            column: col,
                            value: cell.to_string(),
                        })
                    }
                };
                labels.push(l);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| CtadError::NonNumeric {
                line,
                column: col,
                name: headers[col].to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(CtadError::NonFinite {
                    line,
                    column: col,
                    value: v,
                });
            }
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(CtadError::Empty("CSV has no data rows"));
    }
    let features = Matrix::new(labels.len(), width - 1, data)?;
    Dataset::new(name, features, labels)
}

/// One-class split: half the normals train, the rest plus every anomaly test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTestSplit {
    pub train: Matrix,
    pub test_features: Matrix,
    pub test_labels: Vec<u8>,
    /// Source row of each training row.
    pub train_index: Vec<usize>,
    /// Source row of each test row; external score files follow this order.
    pub test_index: Vec<usize>,
    pub seed: u64,
}

/// Shuffles the normal rows with `seed` and assigns the first `floor(n/2)` to
/// training. Both index lists are returned in ascending source order.
pub fn split(ds: &Dataset, seed: u64) -> Result<TrainTestSplit> {
    let mut normals: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 0).collect();
    if normals.len() < 2 {
        return Err(CtadError::OutOfRange {
            what: "normal row count",
            got: normals.len(),
            min: 2,
            max: usize::MAX,
        });
    }
    normals.shuffle(&mut seed::rng(seed));
    let half = normals.len() / 2;
    let mut train_index = normals[..half].to_vec();
    train_index.sort_unstable();

    let mut test_index: Vec<usize> = normals[half..]
        .iter()
        .copied()
        .chain((0..ds.len()).filter(|&i| ds.labels[i] == 1))
        .collect();
    test_index.sort_unstable();

    Ok(TrainTestSplit {
        train: ds.features.select_rows(&train_index),
        test_features: ds.features.select_rows(&test_index),
        test_labels: test_index.iter().map(|&i| ds.labels[i]).collect(),
        train_index,
        test_index,
        seed,
    })
}

/// Per-column z-score parameters fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; near-constant columns get stddev 1.
    pub fn fit(train: &Matrix) -> Result<Self> {
        if train.is_empty() {
            return Err(CtadError::Empty("standardizer needs at least one row"));
        }
        let mean = train.column_means();
        let mut var = vec![0.0; train.cols()];
        for r in train.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let n = train.rows() as f64;
        let stddev = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < STD_FLOOR {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, stddev })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.stddev) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        self.check_dim(z)?;
        let mut out = z.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.stddev) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(CtadError::DimensionMismatch {
                expected: self.mean.len(),
                got: x.cols(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Dataset> {
        read_csv(s.as_bytes(), &LabelColumn::Name("y".into()), "t")
    }

    #[test]
    fn parses_small_csv() {
        let ds = parse("a,b,y\n0,0,0\n1,0,0\n0,1,0\n9,9,1").unwrap();
        assert_eq!(ds.n_normal(), 3);
        assert_eq!(ds.n_anomaly(), 1);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.features.row(3), &[9.0, 9.0]);
    }

    #[test]
    fn label_by_index() {
        let ds = read_csv("y,a\n1,2.5\n0,3".as_bytes(), &LabelColumn::Index(0), "t").unwrap();
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.features.as_slice(), &[2.5, 3.0]);
    }

    #[test]
    fn non_numeric_cell_is_located() {
        let err = parse("a,b,y\n0,0,0\n1,abc,0\n").unwrap_err();
        match err {
            CtadError::NonNumeric {
                line,
                column,
                ref value,
                ref name,
            } => {
                assert_eq!((line, column), (3, 1));
                assert_eq!(value, "abc");
                assert_eq!(name, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("abc"));
    }

    #[test]
    fn ragged_and_bad_labels() {
        assert!(matches!(
            parse("a,b,y\n0,0,0\n1,0\n"),
            Err(CtadError::RaggedRow { line: 3, .. })
        ));
        assert!(matches!(
            parse("a,b,y\n0,0,2\n"),
            Err(CtadError::BadLabel { line: 2, column: 2, .. })
        ));
        assert!(matches!(parse("a,b,y\n0,nan,0\n"), Err(CtadError::NonFinite { .. })));
        assert!(matches!(parse("a,b,z\n0,0,0\n"), Err(CtadError::MissingLabelColumn(_))));
    }

    fn toy() -> Dataset {
        let f = Matrix::column(&[0.0, 1.0, 2.0, 3.0, 10.0, 11.0]);
        Dataset::new("toy", f, vec![0, 0, 0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn split_counts_and_determinism() {
        let ds = toy();
        let s = split(&ds, 42).unwrap();
        assert_eq!(s.train.rows(), 2);
        assert_eq!(s.test_features.rows(), 4);
        assert_eq!(s.test_labels.iter().filter(|&&l| l == 1).count(), 2);
        let again = split(&ds, 42).unwrap();
        assert_eq!(s.train_index, again.train_index);
        assert_eq!(s.test_index, again.test_index);
    }

    #[test]
    fn split_needs_two_normals() {
        let f = Matrix::column(&[0.0, 5.0]);
        let ds = Dataset::new("x", f, vec![0, 1]).unwrap();
        assert!(split(&ds, 0).is_err());
    }

    #[test]
    fn odd_normal_count_floors_train() {
        let f = Matrix::column(&[0.0, 1.0, 2.0, 3.0, 4.0, 9.0]);
        let ds = Dataset::new("x", f, vec![0, 0, 0, 0, 0, 1]).unwrap();
        let s = split(&ds, 3).unwrap();
        assert_eq!(s.train.rows(), 2);
        assert_eq!(s.test_labels.len(), 4);
    }

    #[test]
    fn standardizer_examples() {
        let st = Standardizer::fit(&Matrix::column(&[2.0, 4.0])).unwrap();
        assert_eq!(st.mean, vec![3.0]);
        assert_eq!(st.stddev, vec![1.0]);
        assert_eq!(st.transform(&Matrix::column(&[3.0])).unwrap().as_slice(), &[0.0]);

        let c = Matrix::column(&[5.0, 5.0, 5.0]);
        let st = Standardizer::fit(&c).unwrap();
        assert_eq!(st.transform(&c).unwrap().as_slice(), &[0.0, 0.0, 0.0]);

        let st = Standardizer::fit(&Matrix::column(&[0.0, 0.0, 4.0, 4.0])).unwrap();
        assert_eq!(st.stddev, vec![2.0]);
        assert_eq!(st.transform(&Matrix::column(&[2.0])).unwrap().as_slice(), &[0.0]);

        assert!(Standardizer::fit(&Matrix::zeros(0, 3)).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_rows(labels in proptest::collection::vec(0u8..2, 2..60), seed: u64) {
            prop_assume!(labels.iter().filter(|&&l| l == 0).count() >= 2);
            let n = labels.len();
            let f = Matrix::column(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
            let ds = Dataset::new("p", f, labels.clone()).unwrap();
            let s = split(&ds, seed).unwrap();
            let mut all: Vec<usize> = s.train_index.iter().chain(&s.test_index).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(s.train_index.iter().all(|&i| labels[i] == 0));
            prop_assert_eq!(s.train.rows(), ds.n_normal() / 2);
        }

        #[test]
        fn standardize_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..30)) {
            let m = Matrix::from_rows(&rows).unwrap();
            let st = Standardizer::fit(&m).unwrap();
            let z = st.transform(&m).unwrap();
            let back = st.inverse_transform(&z).unwrap();
            for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
            for j in 0..3 {
                let col: Vec<f64> = z.iter_rows().map(|r| r[j]).collect();
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                let raw_constant = m.iter_rows().all(|r| r[j] == m.get(0, j));
                if !raw_constant {
                    prop_assert!((std - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
