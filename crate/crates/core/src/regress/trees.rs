//! Extremely randomized trees (Geurts et al. style) for regression.
//!
//! Each node draws one uniform cut point per non-constant feature and keeps the cut with
//! the largest variance reduction. Trees are grown until nodes are pure, constant in
//! every feature, or too small to split into two leaves of `min_leaf` samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_fit_inputs, Matrix, Regressor};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{FlexError, Result};
use crate::seed::substream_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
}

impl Default for ExtraTreesConfig {
    fn default() -> Self {
        ExtraTreesConfig {
            n_trees: 50,
            min_leaf: 5,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    feature: u32,
    /// Split threshold, or the leaf value when `feature == LEAF`.
    value: f64,
    left: u32,
    right: u32,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Node {
            feature: LEAF,
            value,
            left: 0,
            right: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if row[n.feature as usize] <= n.value {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    fn grow(cols: &[Vec<f64>], y: &[f64], min_leaf: usize, rng: &mut ChaCha8Rng) -> Tree {
        let n_features = cols.len();
        let mut idx: Vec<u32> = (0..y.len() as u32).collect();
        let mut nodes = vec![Node::leaf(0.0)];
        let mut stack = vec![(0usize, 0usize, y.len())];
        let mut lo = vec![0.0; n_features];
        let mut hi = vec![0.0; n_features];

        while let Some((node, start, end)) = stack.pop() {
            let members = &mut idx[start..end];
            let n = members.len();
            let (mut sum, mut ymin, mut ymax) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
            for &i in members.iter() {
                let v = y[i as usize];
                sum += v;
                ymin = ymin.min(v);
                ymax = ymax.max(v);
            }
            let mean = sum / n as f64;
            if n < 2 * min_leaf || ymin == ymax {
                nodes[node] = Node::leaf(mean);
                continue;
            }

            for f in 0..n_features {
                let col = &cols[f];
                let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
                for &i in members.iter() {
                    let v = col[i as usize];
                    a = a.min(v);
                    b = b.max(v);
                }
                lo[f] = a;
                hi[f] = b;
            }

            let mut best: Option<(usize, f64, f64)> = None;
            for f in 0..n_features {
                if hi[f] <= lo[f] {
                    continue;
                }
                let u: f64 = rng.random();
                let mut thr = lo[f] + u * (hi[f] - lo[f]);
                if thr >= hi[f] {
                    thr = lo[f];
                }
                let col = &cols[f];
                let (mut n_left, mut s_left) = (0usize, 0.0);
                for &i in members.iter() {
                    if col[i as usize] <= thr {
                        n_left += 1;
                        s_left += y[i as usize];
                    }
                }
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let s_right = sum - s_left;
                let score = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64;
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((f, thr, score));
                }
            }

            let Some((f, thr, _)) = best else {
                nodes[node] = Node::leaf(mean);
                continue;
            };

            let col = &cols[f];
            let mut mid = 0;
            for j in 0..n {
                if col[members[j] as usize] <= thr {
                    members.swap(j, mid);
                    mid += 1;
                }
            }
            let left = nodes.len();
            nodes.push(Node::leaf(0.0));
            nodes.push(Node::leaf(0.0));
            nodes[node] = Node {
                feature: f as u32,
                value: thr,
                left: left as u32,
                right: left as u32 + 1,
            };
            stack.push((left + 1, start + mid, end));
            stack.push((left, start, start + mid));
        }
        Tree { nodes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtraTrees {
    config: ExtraTreesConfig,
    n_features: usize,
    trees: Vec<Tree>,
}

impl ExtraTrees {
    pub fn new(config: ExtraTreesConfig) -> Self {
        ExtraTrees {
            config,
            n_features: 0,
            trees: Vec::new(),
        }
    }

    pub fn config(&self) -> &ExtraTreesConfig {
        &self.config
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    pub(super) fn encode(&self, w: &mut ByteWriter) {
        w.u32(self.config.n_trees as u32);
        w.u32(self.config.min_leaf as u32);
        w.u32(self.n_features as u32);
        w.u32(self.trees.len() as u32);
        for t in &self.trees {
            w.u32(t.nodes.len() as u32);
            for n in &t.nodes {
                w.u32(n.feature);
                w.f64(n.value);
                if n.feature != LEAF {
                    w.u32(n.left);
                    w.u32(n.right);
                }
            }
        }
    }

    pub(super) fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        let config = ExtraTreesConfig {
            n_trees: r.u32()? as usize,
            min_leaf: r.u32()? as usize,
        };
        let n_features = r.u32()? as usize;
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let feature = r.u32()?;
                let value = r.f64()?;
                let node = if feature == LEAF {
                    Node::leaf(value)
                } else {
                    let (left, right) = (r.u32()?, r.u32()?);
                    if feature as usize >= n_features || left as usize >= n_nodes || right as usize >= n_nodes {
                        return Err(FlexError::Contract("corrupt tree node".into()));
                    }
                    Node {
                        feature,
                        value,
                        left,
                        right,
                    }
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(ExtraTrees {
            config,
            n_features,
            trees,
        })
    }
}

impl Regressor for ExtraTrees {
    fn fit(&mut self, x: &Matrix, y: &[f64], seed: u64) -> Result<()> {
        check_fit_inputs(x, y)?;
        if self.config.n_trees == 0 || self.config.min_leaf == 0 {
            return Err(FlexError::Config("extra trees need n_trees ≥ 1 and min_leaf ≥ 1".into()));
        }
        let cols: Vec<Vec<f64>> = (0..x.cols())
            .map(|j| (0..x.rows()).map(|i| x.get(i, j)).collect())
            .collect();
        self.n_features = x.cols();
        self.trees = (0..self.config.n_trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, &format!("tree-{t}")));
                Tree::grow(&cols, y, self.config.min_leaf, &mut rng)
            })
            .collect();
        Ok(())
    }

    fn predict(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features);
        let s: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        s / self.trees.len() as f64
    }

    fn is_fitted(&self) -> bool {
        !self.trees.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> (Matrix, Vec<f64>) {
        let mut x = Matrix::new(2);
        let mut y = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                let (a, b) = (i as f64 / 29.0, j as f64 / 29.0);
                x.push_row(&[a, b]).unwrap();
                y.push((3.0 * a).sin() + b * b);
            }
        }
        (x, y)
    }

    #[test]
    fn fully_grown_trees_interpolate_training_points() {
        let (x, y) = grid();
        let mut m = ExtraTrees::new(ExtraTreesConfig { n_trees: 10, min_leaf: 1 });
        m.fit(&x, &y, 3).unwrap();
        for i in 0..x.rows() {
            assert!((m.predict(x.row(i)) - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn generalizes_on_smooth_target() {
        let (x, y) = grid();
        let mut m = ExtraTrees::new(ExtraTreesConfig::default());
        m.fit(&x, &y, 3).unwrap();
        let mut sq = 0.0;
        for i in 0..20 {
            let (a, b) = (0.013 + i as f64 * 0.049, 0.97 - i as f64 * 0.047);
            let err = m.predict(&[a, b]) - ((3.0 * a).sin() + b * b);
            sq += err * err;
        }
        assert!((sq / 20.0).sqrt() < 0.05);
    }

    #[test]
    fn seeded_fit_is_reproducible() {
        let (x, y) = grid();
        let cfg = ExtraTreesConfig { n_trees: 5, min_leaf: 5 };
        let mut a = ExtraTrees::new(cfg.clone());
        let mut b = ExtraTrees::new(cfg.clone());
        a.fit(&x, &y, 42).unwrap();
        b.fit(&x, &y, 42).unwrap();
        assert_eq!(a, b);
        let mut c = ExtraTrees::new(cfg);
        c.fit(&x, &y, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn min_leaf_bounds_leaf_sizes() {
        let (x, y) = grid();
        let mut m = ExtraTrees::new(ExtraTreesConfig { n_trees: 1, min_leaf: 20 });
        m.fit(&x, &y, 1).unwrap();
        let leaves = m.trees[0].nodes.iter().filter(|n| n.feature == LEAF).count();
        assert!(leaves <= x.rows() / 20);
    }

    #[test]
    fn constant_features_give_a_single_leaf() {
        let x = Matrix::from_rows(&vec![vec![1.0, 2.0]; 10]).unwrap();
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let mut m = ExtraTrees::new(ExtraTreesConfig { n_trees: 3, min_leaf: 1 });
        m.fit(&x, &y, 0).unwrap();
        assert_eq!(m.node_count(), 3);
        assert!((m.predict(&[1.0, 2.0]) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn empty_data_is_a_training_error() {
        let mut m = ExtraTrees::new(ExtraTreesConfig::default());
        assert!(matches!(m.fit(&Matrix::new(3), &[], 0), Err(FlexError::Training(_))));
        assert!(!m.is_fitted());
    }
}
