use super::{LoadDataset, N_RAW_FEATURES};
use crate::error::{EmsError, Result};

type Row = [f64; N_RAW_FEATURES];

/// Stopping rules of the tree builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Smallest number of rows in a leaf.
    pub min_leaf: usize,
    /// A split is kept only if it removes at least this fraction of the
    /// node's squared-error impurity.
    pub min_impurity_decrease: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_leaf: 5,
            min_impurity_decrease: 1e-4,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(EmsError::config("predict.tree.min_leaf", "must be at least 1"));
        }
        if !(self.min_impurity_decrease >= 0.0) {
            return Err(EmsError::config("predict.tree.min_impurity_decrease", "must be >= 0"));
        }
        Ok(())
    }
}

/// Node of a regression tree stored in a flat arena; index 0 is the root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary regression tree over the raw feature encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub(crate) nodes: Vec<TreeNode>,
}

impl TreeModel {
    /// Builds a tree from an explicit node arena, checking that every
    /// child index points forward and every node is reachable.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(EmsError::domain("tree has no nodes"));
        }
        let mut seen = vec![false; nodes.len()];
        seen[0] = true;
        for (i, n) in nodes.iter().enumerate() {
            match *n {
                TreeNode::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(EmsError::domain(format!("leaf {i} has non-finite value")));
                    }
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= N_RAW_FEATURES || !threshold.is_finite() {
                        return Err(EmsError::domain(format!("split {i} has invalid feature or threshold")));
                    }
                    for c in [left, right] {
                        if c <= i || c >= nodes.len() || seen[c] {
                            return Err(EmsError::domain(format!("split {i} has invalid child {c}")));
                        }
                        seen[c] = true;
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(EmsError::domain("tree has unreachable nodes"));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &Row) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Row) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }
}

struct Builder<'a> {
    x: &'a [Row],
    y: &'a [f64],
    params: TreeParams,
    nodes: Vec<TreeNode>,
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Sum of squared deviations from the mean.
fn sse(idx: &[usize], y: &[f64]) -> f64 {
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    idx.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum()
}

impl Builder<'_> {
    /// Exhaustive search over features and midpoints between consecutive
    /// distinct values. Ties keep the lowest feature, then the lowest
    /// threshold.
    fn best_split(&self, idx: &[usize]) -> Option<Split> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Split> = None;
        let mut sorted = idx.to_vec();
        for k in 0..N_RAW_FEATURES {
            sorted.sort_by(|&a, &b| self.x[a][k].total_cmp(&self.x[b][k]).then(a.cmp(&b)));
            let total: f64 = sorted.iter().map(|&i| self.y[i]).sum();
            let total_sq: f64 = sorted.iter().map(|&i| self.y[i] * self.y[i]).sum();
            let (mut s, mut sq) = (0.0, 0.0);
            for pos in 0..n - 1 {
                let i = sorted[pos];
                s += self.y[i];
                sq += self.y[i] * self.y[i];
                let (lo, hi) = (self.x[i][k], self.x[sorted[pos + 1]][k]);
                let n_left = pos + 1;
                if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let (nl, nr) = (n_left as f64, (n - n_left) as f64);
                let left = (sq - s * s / nl).max(0.0);
                let right = ((total_sq - sq) - (total - s) * (total - s) / nr).max(0.0);
                let impurity = left + right;
                if best.as_ref().map_or(true, |b| impurity < b.impurity) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some(Split {
                        feature: k,
                        threshold: if mid < hi { mid } else { lo },
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(TreeNode::Leaf { value });
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf {
            return self.leaf(idx);
        }
        let first = self.y[idx[0]];
        let parent = sse(idx, self.y);
        if parent <= 0.0 || idx.iter().all(|&i| self.y[i] == first) {
            return self.leaf(idx);
        }
        let Some(split) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        // Recompute exactly on the partition; the sweep used running sums.
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let children = sse(&l, self.y) + sse(&r, self.y);
        if parent - children < self.params.min_impurity_decrease * parent {
            return self.leaf(idx);
        }
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: f64::NAN });
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

pub(crate) fn fit_tree(x: &[Row], y: &[f64], params: &TreeParams) -> TreeModel {
    let mut b = Builder {
        x,
        y,
        params: *params,
        nodes: Vec::new(),
    };
    let idx: Vec<usize> = (0..x.len()).collect();
    b.grow(&idx, 0);
    TreeModel { nodes: b.nodes }
}

fn design(data: &LoadDataset) -> Result<(Vec<Row>, Vec<f64>)> {
    if data.is_empty() {
        return Err(EmsError::domain("cannot train on an empty dataset"));
    }
    Ok((data.rows.iter().map(|r| r.features.raw()).collect(), data.targets()))
}

/// Fits a CART regression tree minimising the summed squared error of
/// the two children at every split.
pub fn train_regression_tree(data: &LoadDataset, params: &TreeParams) -> Result<TreeModel> {
    params.validate()?;
    let (x, y) = design(data)?;
    Ok(fit_tree(&x, &y, params))
}

/// Boosting schedule and base-learner shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            learning_rate: 0.1,
            tree: TreeParams {
                max_depth: 3,
                min_leaf: 5,
                min_impurity_decrease: 0.0,
            },
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(EmsError::config("predict.gbdt.learning_rate", "must lie in (0, 1]"));
        }
        self.tree.validate()
    }
}

/// Gradient-boosted regression trees under squared loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub(crate) baseline: f64,
    pub(crate) learning_rate: f64,
    pub(crate) trees: Vec<TreeModel>,
}

impl GbdtModel {
    /// A model with no trees that always returns `baseline`.
    pub fn constant(baseline: f64) -> Self {
        Self {
            baseline,
            learning_rate: 1.0,
            trees: Vec::new(),
        }
    }

    pub fn new(baseline: f64, learning_rate: f64, trees: Vec<TreeModel>) -> Self {
        Self {
            baseline,
            learning_rate,
            trees,
        }
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    /// Prediction using only the first `m` trees.
    pub fn staged_predict(&self, x: &Row, m: usize) -> f64 {
        self.trees
            .iter()
            .take(m)
            .fold(self.baseline, |acc, t| acc + self.learning_rate * t.predict(x))
    }

    pub fn predict(&self, x: &Row) -> f64 {
        self.staged_predict(x, self.trees.len())
    }
}

/// Starts from the mean target and repeatedly fits a tree to the current
/// residuals, adding it scaled by the learning rate.
pub fn train_gbdt(data: &LoadDataset, params: &GbdtParams) -> Result<GbdtModel> {
    params.validate()?;
    let (x, y) = design(data)?;
    let baseline = y.iter().sum::<f64>() / y.len() as f64;
    let mut pred = vec![baseline; y.len()];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut residual = vec![0.0; y.len()];
    for _ in 0..params.n_trees {
        for i in 0..y.len() {
            residual[i] = y[i] - pred[i];
        }
        let tree = fit_tree(&x, &residual, &params.tree);
        for i in 0..y.len() {
            pred[i] += params.learning_rate * tree.predict(&x[i]);
        }
        trees.push(tree);
    }
    Ok(GbdtModel {
        baseline,
        learning_rate: params.learning_rate,
        trees,
    })
}
