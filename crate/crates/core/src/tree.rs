//! Weighted, depth-limited regression tree.
//!
//! Greedy CART fit minimizing weighted squared error: at each node every
//! (feature, threshold) pair is scored by its weighted-variance reduction,
//! with thresholds placed at midpoints between consecutive distinct sorted
//! feature values. Ties break to the lowest feature index, then the lowest
//! threshold, so a fit is a deterministic function of its input.

use std::fmt;

use crate::{Error, Result};

/// One training point with a positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub features: Vec<f64>,
    pub label: f64,
    pub weight: f64,
}

impl WeightedSample {
    pub fn new(features: Vec<f64>, label: f64, weight: f64) -> Self {
        WeightedSample {
            features,
            label,
            weight,
        }
    }
}

/// A fitted regression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        /// Weighted mean of the labels that reached this leaf.
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Route a feature vector to its leaf: `x[feature] < threshold` goes left.
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[*feature] < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn fmt_indent(&self, f: &mut fmt::Formatter<'_>, indent: usize) -> fmt::Result {
        let pad = "  ".repeat(indent);
        match self {
            TreeNode::Leaf { value } => writeln!(f, "{}leaf value={}", pad, value),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                writeln!(f, "{}split x{} < {}", pad, feature, threshold)?;
                left.fmt_indent(f, indent + 1)?;
                right.fmt_indent(f, indent + 1)
            }
        }
    }
}

impl fmt::Display for TreeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indent(f, 0)
    }
}

/// Best split of one node, if any positive-gain split exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

struct NodeStats {
    weight: f64,
    weight_label: f64,
    weight_label_sq: f64,
    mean: f64,
    sse: f64,
}

/// Node sums accumulated in index order, the one canonical order shared by
/// every feature's split scan.
fn node_stats(samples: &[WeightedSample], indices: &[usize]) -> NodeStats {
    let mut w = 0.0;
    let mut wy = 0.0;
    let mut wyy = 0.0;
    for &i in indices {
        let s = &samples[i];
        w += s.weight;
        wy += s.weight * s.label;
        wyy += s.weight * s.label * s.label;
    }
    NodeStats {
        weight: w,
        weight_label: wy,
        weight_label_sq: wyy,
        mean: wy / w,
        sse: (wyy - wy * wy / w).max(0.0),
    }
}

/// Pure-noise floor below which a node's weighted variance counts as zero.
fn variance_is_negligible(stats: &NodeStats) -> bool {
    stats.sse / stats.weight <= 1e-12 * (1.0 + stats.mean * stats.mean)
}

/// Relative slack when comparing split gains. Distinct (feature,
/// threshold) pairs that induce the same partition have mathematically
/// equal gains, but the prefix sums accumulate in feature-specific orders
/// and round differently; requiring an improvement beyond this slack makes
/// the lowest-feature-then-lowest-threshold tie break hold for such ties.
pub(crate) const GAIN_TIE_REL_EPS: f64 = 1e-12;

/// Scan every (feature, midpoint-threshold) pair for the largest
/// weighted-SSE reduction. Ties keep the earliest candidate, i.e. the
/// lowest feature index and then the lowest threshold.
fn best_split(
    samples: &[WeightedSample],
    indices: &[usize],
    min_leaf: usize,
    totals: &NodeStats,
) -> Option<SplitChoice> {
    let dim = samples[indices[0]].features.len();
    let n = indices.len();
    let parent_sse = totals.sse;
    let tolerance = GAIN_TIE_REL_EPS * parent_sse;
    let mut best: Option<SplitChoice> = None;

    let mut order: Vec<usize> = Vec::with_capacity(n);
    for feature in 0..dim {
        order.clear();
        order.extend_from_slice(indices);
        order.sort_unstable_by(|&a, &b| {
            samples[a].features[feature]
                .partial_cmp(&samples[b].features[feature])
                .unwrap()
                .then(a.cmp(&b))
        });

        let mut left_w = 0.0;
        let mut left_wy = 0.0;
        let mut left_wyy = 0.0;
        for pos in 1..n {
            let prev = &samples[order[pos - 1]];
            left_w += prev.weight;
            left_wy += prev.weight * prev.label;
            left_wyy += prev.weight * prev.label * prev.label;

            let lo = prev.features[feature];
            let hi = samples[order[pos]].features[feature];
            if !(lo < hi) {
                continue;
            }
            let threshold = 0.5 * (lo + hi);
            // Guard against midpoints that round onto the lower value and
            // would route it to the wrong side at prediction time.
            if !(threshold > lo) {
                continue;
            }
            if pos < min_leaf || n - pos < min_leaf {
                continue;
            }
            let right_w = totals.weight - left_w;
            let left_sse = (left_wyy - left_wy * left_wy / left_w).max(0.0);
            let right_wy = totals.weight_label - left_wy;
            let right_sse =
                ((totals.weight_label_sq - left_wyy) - right_wy * right_wy / right_w).max(0.0);
            let gain = parent_sse - left_sse - right_sse;
            if gain > best.map_or(0.0, |b| b.gain) + tolerance {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn build(
    samples: &[WeightedSample],
    indices: &[usize],
    depth_left: usize,
    min_leaf: usize,
) -> TreeNode {
    let stats = node_stats(samples, indices);
    if depth_left == 0 || indices.len() < 2 * min_leaf || variance_is_negligible(&stats) {
        return TreeNode::Leaf { value: stats.mean };
    }
    let Some(split) = best_split(samples, indices, min_leaf, &stats) else {
        return TreeNode::Leaf { value: stats.mean };
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| samples[i].features[split.feature] < split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(build(samples, &left_idx, depth_left - 1, min_leaf)),
        right: Box::new(build(samples, &right_idx, depth_left - 1, min_leaf)),
    }
}

/// Fit a greedy weighted regression tree.
///
/// Recursion stops at `max_depth`, when fewer than `2 * min_leaf` samples
/// remain, or when no split reduces the weighted SSE.
pub fn fit_tree(samples: &[WeightedSample], max_depth: usize, min_leaf: usize) -> Result<TreeNode> {
    if samples.is_empty() {
        return Err(Error::Empty("tree training set"));
    }
    let dim = samples[0].features.len();
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: s.features.len(),
            });
        }
        if !(s.weight > 0.0) {
            return Err(Error::Config("sample weights must be positive".into()));
        }
    }
    let min_leaf = min_leaf.max(1);
    let indices: Vec<usize> = (0..samples.len()).collect();
    Ok(build(samples, &indices, max_depth, min_leaf))
}

/// Training-set weighted sum of squared errors of a fitted tree.
pub fn weighted_sse(tree: &TreeNode, samples: &[WeightedSample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let e = s.label - tree.predict(&s.features);
            s.weight * e * e
        })
        .sum()
}
