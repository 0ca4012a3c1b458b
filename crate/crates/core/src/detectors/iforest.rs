use rand::seq::index;
use rand::Rng;

use crate::error::{CtadError, Result};
use crate::matrix::Matrix;
use crate::seed;

const EULER_GAMMA: f64 = 0.577_215_664_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IForestParams {
    pub trees: usize,
    pub subsample: usize,
    /// Tree `t` is grown from `seed + t`.
    pub seed: u64,
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow<R: Rng>(train: &Matrix, rows: Vec<usize>, height_limit: usize, rng: &mut R) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        tree.build(train, rows, 0, height_limit, rng);
        tree
    }

    fn build<R: Rng>(&mut self, train: &Matrix, rows: Vec<usize>, depth: usize, limit: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= limit || rows.len() <= 1 {
            return id;
        }
        let feature = rng.random_range(0..train.cols());
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            let v = train.get(r, feature);
            (lo.min(v), hi.max(v))
        });
        if lo >= hi {
            return id;
        }
        let threshold = rng.random_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&r| train.get(r, feature) < threshold);
        let left = self.build(train, l, depth + 1, limit, rng);
        let right = self.build(train, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// points: `2 H(n-1) - 2(n-1)/n` with `H(i) = ln i + 0.5772156649`, and 0
/// for `n <= 1`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
}

/// Isolation forest; scores are `2^(-E[h(x)] / c(subsample))`.
#[derive(Debug, Clone)]
pub struct IForest {
    trees: Vec<Tree>,
    subsample: usize,
    dim: usize,
}

impl IForest {
    pub fn fit(train: &Matrix, params: &IForestParams) -> Result<Self> {
        if params.trees == 0 {
            return Err(CtadError::InvalidParameter("iforest needs at least one tree".into()));
        }
        if params.subsample < 2 || params.subsample > train.rows() {
            return Err(CtadError::OutOfRange {
                what: "iforest subsample",
                got: params.subsample,
                min: 2,
                max: train.rows(),
            });
        }
        let limit = (params.subsample as f64).log2().ceil() as usize;
        let trees = (0..params.trees)
            .map(|t| {
                let mut rng = seed::rng(params.seed.wrapping_add(t as u64));
                let rows = index::sample(&mut rng, train.rows(), params.subsample).into_vec();
                Tree::grow(train, rows, limit, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            subsample: params.subsample,
            dim: train.cols(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        (2.0f64).powf(-self.mean_path_length(x) / average_path_length(self.subsample))
    }
}
