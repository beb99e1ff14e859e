//! Random forest: bagged CART trees with Gini splits and per-split
//! feature subsampling. Trees train independently, so the build fans out
//! across the worker pool with per-tree seeded streams.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::logmodel::Label;
use crate::{par, rng};

use super::classical::split_by_class;
use super::ClfError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { trees: 100, max_depth: 24, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Leaf { p_malicious: f64 },
    Split { dim: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_prob(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { p_malicious } => return p_malicious,
                Node::Split { dim, threshold, left, right } => {
                    at = if x[dim] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    features: &'a [Vec<f64>],
    targets: &'a [f64],
    dims_per_split: usize,
    config: ForestConfig,
}

impl Builder<'_> {
    fn gini(pos: f64, total: f64) -> f64 {
        let p = pos / total;
        2.0 * p * (1.0 - p)
    }

    /// Best (threshold, impurity) for one dimension over the node's rows.
    fn best_split_on(&self, rows: &[usize], dim: usize) -> Option<(f64, f64)> {
        let mut vals: Vec<(f64, f64)> =
            rows.iter().map(|&r| (self.features[r][dim], self.targets[r])).collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let total = rows.len() as f64;
        let total_pos: f64 = vals.iter().map(|v| v.1).sum();
        let mut left_pos = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for i in 0..vals.len() - 1 {
            left_pos += vals[i].1;
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let left_n = (i + 1) as f64;
            let right_n = total - left_n;
            let impurity = (left_n * Self::gini(left_pos, left_n)
                + right_n * Self::gini(total_pos - left_pos, right_n))
                / total;
            if best.map_or(true, |(_, b)| impurity < b) {
                best = Some(((vals[i].0 + vals[i + 1].0) / 2.0, impurity));
            }
        }
        best
    }

    fn grow(&self, nodes: &mut Vec<Node>, rows: Vec<usize>, depth: usize, rng: &mut impl Rng) -> usize {
        let pos: f64 = rows.iter().map(|&r| self.targets[r]).sum();
        let here = nodes.len();
        let p = pos / rows.len() as f64;
        if depth >= self.config.max_depth
            || rows.len() <= self.config.min_leaf
            || p == 0.0
            || p == 1.0
        {
            nodes.push(Node::Leaf { p_malicious: p });
            return here;
        }
        let dim_count = self.features[0].len();
        let mut dims: Vec<usize> = (0..dim_count).collect();
        dims.partial_shuffle(rng, self.dims_per_split);
        let mut best: Option<(usize, f64, f64)> = None;
        for &dim in dims.iter().take(self.dims_per_split) {
            if let Some((thr, imp)) = self.best_split_on(&rows, dim) {
                if best.map_or(true, |(_, _, b)| imp < b) {
                    best = Some((dim, thr, imp));
                }
            }
        }
        let Some((dim, threshold, _)) = best else {
            nodes.push(Node::Leaf { p_malicious: p });
            return here;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.features[r][dim] <= threshold);
        nodes.push(Node::Leaf { p_malicious: p });
        let left = self.grow(nodes, left_rows, depth + 1, rng);
        let right = self.grow(nodes, right_rows, depth + 1, rng);
        nodes[here] = Node::Split { dim, threshold, left, right };
        here
    }

    fn tree(&self, seed: u64, index: usize) -> Tree {
        let mut rng = rng::indexed(seed, rng::stream::FOREST, index as u64);
        let n = self.features.len();
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut nodes = Vec::new();
        self.grow(&mut nodes, rows, 0, &mut rng);
        Tree { nodes }
    }
}

pub fn train_forest(
    features: &[Vec<f64>],
    labels: &[Label],
    config: ForestConfig,
    seed: u64,
) -> Result<Forest, ClfError> {
    split_by_class(features, labels)?;
    let targets: Vec<f64> =
        labels.iter().map(|&l| (l == Label::Malicious) as u8 as f64).collect();
    let dim = features[0].len();
    let builder = Builder {
        features,
        targets: &targets,
        dims_per_split: (dim as f64).sqrt().ceil() as usize,
        config,
    };
    let trees = par::map_range(config.trees, |i| builder.tree(seed, i));
    Ok(Forest { config, trees })
}

impl Forest {
    /// Fraction of trees whose leaf leans malicious.
    pub fn score(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.leaf_prob(x) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}
