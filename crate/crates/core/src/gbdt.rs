//! Gradient-boosted regression trees with exact greedy splits.
//!
//! Squared-error boosting: each stage fits a depth-limited tree to the
//! current residuals and adds `learning_rate * leaf mean` to every row.
//! Trees grow level by level; at every level each feature is scanned once
//! in presorted order. Split ties resolve to the lowest feature index and
//! then the lowest threshold; thresholds are midpoints between consecutive
//! distinct values.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub iterations: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// No step of the fit is randomized; kept so runs record a seed.
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self { iterations: 200, max_depth: 10, learning_rate: 1.0, min_samples_leaf: 1, seed: 0 }
    }
}

impl GbdtConfig {
    /// Smaller budget used for desk-scale evaluation.
    pub fn desk() -> Self {
        Self { iterations: 50, max_depth: 6, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument("iterations, depth and min leaf size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} not in (0, 1]", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
    /// Training MSE before the first tree and after each one.
    pub training_mse: Vec<f64>,
    /// Predictions on the training rows at the end of the fit.
    #[serde(skip)]
    pub training_predictions: Vec<f64>,
}

impl GbdtModel {
    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.n_features {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.n_features,
                features.ncols()
            )));
        }
        Ok(features
            .rows()
            .into_iter()
            .map(|row| {
                let mut p = self.base;
                for t in &self.trees {
                    p += self.learning_rate * t.predict_row(row);
                }
                p
            })
            .collect())
    }
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predictions.len(), targets.len(), "length mismatch");
    assert!(!targets.is_empty(), "mse of nothing");
    predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / targets.len() as f64
}

const DONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Frontier {
    node: usize,
    count: usize,
    sum: f64,
    min: f64,
    max: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    sorted: &'a [Vec<u32>],
    max_depth: usize,
    min_leaf: usize,
}

impl Grower<'_> {
    /// Grow one tree on `residual`; returns the tree and each row's leaf value.
    fn grow(&self, residual: &[f64]) -> (RegressionTree, Vec<f64>) {
        let n = residual.len();
        let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
        let mut slot_of: Vec<u32> = vec![0; n];
        let mut leaf_of: Vec<usize> = vec![0; n];
        let mut frontier = vec![stats(0, residual, 0..n)];

        for _ in 0..self.max_depth {
            let splittable: Vec<bool> = frontier
                .iter()
                .map(|s| s.count >= 2 * self.min_leaf && s.max > s.min)
                .collect();
            if !splittable.iter().any(|&b| b) {
                break;
            }
            let per_feature = par::map_indexed(self.columns.len(), |f| {
                self.scan_feature(f, residual, &slot_of, &frontier, &splittable)
            });
            let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
            for found in per_feature {
                for (b, c) in best.iter_mut().zip(found) {
                    if let Some(c) = c {
                        if b.is_none_or(|cur| c.gain > cur.gain) {
                            *b = Some(c);
                        }
                    }
                }
            }
            // children slots for the next level
            let mut next_slot: Vec<Option<(u32, u32)>> = vec![None; frontier.len()];
            let mut next_nodes = Vec::new();
            for (s, cand) in best.iter().enumerate() {
                let f = &frontier[s];
                match cand {
                    Some(c) => {
                        let (l, r) = (nodes.len(), nodes.len() + 1);
                        nodes.push(TreeNode::Leaf { value: 0.0 });
                        nodes.push(TreeNode::Leaf { value: 0.0 });
                        nodes[f.node] = TreeNode::Split { feature: c.feature, threshold: c.threshold, left: l, right: r };
                        let base = next_nodes.len() as u32;
                        next_nodes.push(l);
                        next_nodes.push(r);
                        next_slot[s] = Some((base, base + 1));
                    }
                    None => nodes[f.node] = TreeNode::Leaf { value: f.sum / f.count as f64 },
                }
            }
            for r in 0..n {
                let s = slot_of[r];
                if s == DONE {
                    continue;
                }
                let s = s as usize;
                match (next_slot[s], best[s]) {
                    (Some((l, rt)), Some(c)) => {
                        slot_of[r] = if self.columns[c.feature][r] <= c.threshold { l } else { rt };
                    }
                    _ => {
                        leaf_of[r] = frontier[s].node;
                        slot_of[r] = DONE;
                    }
                }
            }
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); next_nodes.len()];
            for r in 0..n {
                if slot_of[r] != DONE {
                    members[slot_of[r] as usize].push(r);
                }
            }
            frontier = next_nodes
                .iter()
                .zip(members)
                .map(|(&node, rows)| stats(node, residual, rows.into_iter()))
                .collect();
            if frontier.is_empty() {
                break;
            }
        }
        for f in &frontier {
            nodes[f.node] = TreeNode::Leaf { value: f.sum / f.count as f64 };
        }
        for r in 0..n {
            if slot_of[r] != DONE {
                leaf_of[r] = frontier[slot_of[r] as usize].node;
            }
        }
        let values = leaf_of
            .iter()
            .map(|&i| match nodes[i] {
                TreeNode::Leaf { value } => value,
                TreeNode::Split { .. } => unreachable!("rows end in leaves"),
            })
            .collect();
        (RegressionTree { nodes }, values)
    }

    fn scan_feature(
        &self,
        f: usize,
        residual: &[f64],
        slot_of: &[u32],
        frontier: &[Frontier],
        splittable: &[bool],
    ) -> Vec<Option<Candidate>> {
        let k = frontier.len();
        let mut cnt = vec![0usize; k];
        let mut sum = vec![0.0f64; k];
        let mut last = vec![0.0f64; k];
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        let col = &self.columns[f];
        for &r in &self.sorted[f] {
            let r = r as usize;
            let s = slot_of[r];
            if s == DONE || !splittable[s as usize] {
                continue;
            }
            let s = s as usize;
            let v = col[r];
            if cnt[s] > 0 && v > last[s] {
                let node = &frontier[s];
                let (nl, nr) = (cnt[s], node.count - cnt[s]);
                if nl >= self.min_leaf && nr >= self.min_leaf {
                    let (sl, sr) = (sum[s], node.sum - sum[s]);
                    let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - node.sum * node.sum / node.count as f64;
                    if best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(Candidate { gain, feature: f, threshold: midpoint(last[s], v) });
                    }
                }
            }
            cnt[s] += 1;
            sum[s] += residual[r];
            last[s] = v;
        }
        best
    }
}

fn stats(node: usize, residual: &[f64], rows: impl Iterator<Item = usize>) -> Frontier {
    let mut s = Frontier { node, count: 0, sum: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY };
    for r in rows {
        let v = residual[r];
        s.count += 1;
        s.sum += v;
        s.min = s.min.min(v);
        s.max = s.max.max(v);
    }
    s
}

pub fn fit(features: &Array2<f64>, targets: &[f64], cfg: &GbdtConfig) -> Result<GbdtModel> {
    cfg.validate()?;
    let n = features.nrows();
    if n < 2 || targets.len() != n {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows and one target per row, got {n} rows and {} targets",
            targets.len()
        )));
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("target {i}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features".into()));
    }
    let columns: Vec<Vec<f64>> = features.columns().into_iter().map(|c| c.to_vec()).collect();
    let sorted: Vec<Vec<u32>> = columns
        .iter()
        .map(|c| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let grower = Grower { columns: &columns, sorted: &sorted, max_depth: cfg.max_depth, min_leaf: cfg.min_samples_leaf };

    let base = targets.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut training_mse = vec![mse(&pred, targets)];
    let mut trees = Vec::with_capacity(cfg.iterations);
    let mut residual = vec![0.0; n];
    for _ in 0..cfg.iterations {
        for ((r, t), p) in residual.iter_mut().zip(targets).zip(&pred) {
            *r = t - p;
        }
        let (tree, leaf_values) = grower.grow(&residual);
        for (p, v) in pred.iter_mut().zip(&leaf_values) {
            *p += cfg.learning_rate * v;
        }
        training_mse.push(mse(&pred, targets));
        trees.push(tree);
    }
    Ok(GbdtModel {
        base,
        learning_rate: cfg.learning_rate,
        trees,
        n_features: features.ncols(),
        training_mse,
        training_predictions: pred,
    })
}
