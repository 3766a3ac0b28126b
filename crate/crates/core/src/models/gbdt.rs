//! Gradient-boosted decision trees on histogram-binned features with
//! logistic loss. Splits maximize the second-order gain G^2/(H+lambda);
//! leaves take Newton steps scaled by the learning rate. Class weights
//! multiply both gradients and hessians.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{effective_pos_weight, EncodedInput, GbdtParams, ModelError};
use crate::math::{ln, sigmoid, Digest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn score(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    base_score: f64,
    trees: Vec<Tree>,
    round_losses: Vec<f64>,
}

impl GbdtModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut f = self.base_score;
        for tree in &self.trees {
            f += tree.score(x);
        }
        sigmoid(f)
    }

    pub fn round_losses(&self) -> &[f64] {
        &self.round_losses
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub(super) fn digest(&self, mut d: Digest) -> Digest {
        d = d.f64(self.base_score);
        for tree in &self.trees {
            for node in &tree.nodes {
                d = match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => d.u64(*feature as u64).f64(*threshold).u64(*left as u64).u64(*right as u64),
                    TreeNode::Leaf { value } => d.f64(*value),
                };
            }
        }
        d
    }
}

/// Equal-frequency cut points per feature; at most bins-1 strictly
/// increasing values.
fn equal_frequency_cuts(column: &mut Vec<f64>, bins: usize) -> Vec<f64> {
    column.sort_by(|a, b| a.total_cmp(b));
    let n = column.len();
    let mut cuts = Vec::new();
    for q in 1..bins {
        let i = q * n / bins;
        if i == 0 || i >= n {
            continue;
        }
        if column[i - 1] < column[i] {
            let cut = 0.5 * (column[i - 1] + column[i]);
            if cuts.last().map_or(true, |&last| cut > last) {
                cuts.push(cut);
            }
        }
    }
    cuts
}

/// Bin index: the number of cut points strictly below x, so that
/// bin(x) <= b exactly when x <= cuts[b].
fn bin_of(cuts: &[f64], x: f64) -> u16 {
    cuts.partition_point(|&c| c < x) as u16
}

struct SplitChoice {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct TreeBuilder<'a> {
    binned: &'a [u16],
    cuts: &'a [Vec<f64>],
    n_features: usize,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<TreeNode>,
}

impl<'a> TreeBuilder<'a> {
    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.reg_lambda) * self.params.learning_rate
    }

    fn node_objective(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.reg_lambda)
    }

    fn best_split(&self, samples: &[usize]) -> Option<SplitChoice> {
        let (mut g_total, mut h_total) = (0.0, 0.0);
        for &i in samples {
            g_total += self.grad[i];
            h_total += self.hess[i];
        }
        let parent = self.node_objective(g_total, h_total);
        let bins = self.params.feature_bins;
        let mut best: Option<SplitChoice> = None;
        let mut hist_g = vec![0.0f64; bins];
        let mut hist_h = vec![0.0f64; bins];
        let mut hist_n = vec![0usize; bins];

        for f in 0..self.n_features {
            if self.cuts[f].is_empty() {
                continue;
            }
            hist_g.iter_mut().for_each(|v| *v = 0.0);
            hist_h.iter_mut().for_each(|v| *v = 0.0);
            hist_n.iter_mut().for_each(|v| *v = 0);
            for &i in samples {
                let b = self.binned[i * self.n_features + f] as usize;
                hist_g[b] += self.grad[i];
                hist_h[b] += self.hess[i];
                hist_n[b] += 1;
            }
            let (mut g_left, mut h_left, mut n_left) = (0.0, 0.0, 0usize);
            for b in 0..self.cuts[f].len() {
                g_left += hist_g[b];
                h_left += hist_h[b];
                n_left += hist_n[b];
                let n_right = samples.len() - n_left;
                if n_left < self.params.min_leaf || n_right < self.params.min_leaf {
                    continue;
                }
                let gain = self.node_objective(g_left, h_left)
                    + self.node_objective(g_total - g_left, h_total - h_left)
                    - parent;
                if gain > 1e-12 && best.as_ref().map_or(true, |s| gain > s.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        bin: b,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let (mut g, mut h) = (0.0, 0.0);
        for &i in &samples {
            g += self.grad[i];
            h += self.hess[i];
        }
        let split = if depth >= self.params.depth || samples.len() < 2 * self.params.min_leaf {
            None
        } else {
            self.best_split(&samples)
        };
        let Some(split) = split else {
            self.nodes.push(TreeNode::Leaf {
                value: self.leaf_weight(g, h),
            });
            return self.nodes.len() - 1;
        };
        let threshold = self.cuts[split.feature][split.bin];
        let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| (self.binned[i * self.n_features + split.feature] as usize) <= split.bin);

        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let left = self.build(left_samples, depth + 1);
        let right = self.build(right_samples, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature: split.feature,
            threshold,
            left,
            right,
        };
        at
    }
}

pub(super) fn train(
    params: &GbdtParams,
    xs: &[EncodedInput],
    ys: &[bool],
    _seed: u64,
) -> Result<GbdtModel, ModelError> {
    let n = xs.len();
    let n_features = xs[0].flat().len();
    let pos_weight = effective_pos_weight(None, ys);
    let weights: Vec<f64> = ys.iter().map(|&y| if y { pos_weight } else { 1.0 }).collect();

    let weight_sum: f64 = weights.iter().sum();
    let pos_weight_sum: f64 = ys
        .iter()
        .zip(&weights)
        .filter(|(y, _)| **y)
        .map(|(_, w)| w)
        .sum();
    let base_rate = (pos_weight_sum / weight_sum).clamp(1e-9, 1.0 - 1e-9);
    let base_score = ln(base_rate / (1.0 - base_rate));

    let mut cuts = Vec::with_capacity(n_features);
    let mut column = vec![0.0f64; n];
    for f in 0..n_features {
        for (i, x) in xs.iter().enumerate() {
            column[i] = x.flat()[f];
        }
        cuts.push(equal_frequency_cuts(&mut column, params.feature_bins));
    }
    let mut binned = vec![0u16; n * n_features];
    for (i, x) in xs.iter().enumerate() {
        let flat = x.flat();
        for f in 0..n_features {
            binned[i * n_features + f] = bin_of(&cuts[f], flat[f]);
        }
    }

    let mut scores = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.trees);
    let mut round_losses = Vec::with_capacity(params.trees);
    let mut grad = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];

    for _round in 0..params.trees {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            let y = ys[i] as u8 as f64;
            grad[i] = weights[i] * (p - y);
            hess[i] = weights[i] * p * (1.0 - p);
        }
        let mut builder = TreeBuilder {
            binned: &binned,
            cuts: &cuts,
            n_features,
            grad: &grad,
            hess: &hess,
            params,
            nodes: Vec::new(),
        };
        builder.build((0..n).collect(), 0);
        let tree = Tree {
            nodes: builder.nodes,
        };
        for (i, x) in xs.iter().enumerate() {
            scores[i] += tree.score(x.flat());
        }
        trees.push(tree);

        let loss = weighted_logistic_loss(&scores, ys, &weights);
        if !loss.is_finite() {
            return Err(ModelError::NanLoss {
                epoch: trees.len(),
                batch: 0,
            });
        }
        round_losses.push(loss);
    }

    Ok(GbdtModel {
        base_score,
        trees,
        round_losses,
    })
}

/// Weighted mean logistic loss over raw scores.
pub fn weighted_logistic_loss(scores: &[f64], ys: &[bool], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for ((&s, &y), &w) in scores.iter().zip(ys).zip(weights) {
        let p = sigmoid(s).clamp(1e-15, 1.0 - 1e-15);
        let l = if y { -ln(p) } else { -ln(1.0 - p) };
        total += w * l;
        wsum += w;
    }
    total / wsum
}
