//! Plain CART regression forest (variance reduction splits, leaf means).

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RfccaError};
use crate::forest::{ForestConfig, Inbag, SamplingMode, DEFAULT_NTREE, DEFAULT_SAMPLE_FRACTION};
use crate::matrix::DataMatrix;
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::tree::{default_mtry, TreeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForestConfig {
    pub ntree: usize,
    pub nodesize: usize,
    /// `None` resolves to `max(1, ceil(r / 3))`.
    pub mtry: Option<usize>,
    pub sampling: SamplingMode,
    pub sample_fraction: f64,
    pub rng_seed: u64,
}

impl Default for RegressionForestConfig {
    fn default() -> Self {
        Self {
            ntree: DEFAULT_NTREE,
            nodesize: 5,
            mtry: None,
            sampling: SamplingMode::SubsampleWithoutReplacement,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            rng_seed: 0,
        }
    }
}

impl RegressionForestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    fn as_sampling_config(&self) -> ForestConfig {
        ForestConfig {
            ntree: self.ntree,
            tree: TreeConfig { nodesize: self.nodesize, mtry: 1, nsplit: 1, exhaustive: true, rng_seed: 0 },
            sampling: self.sampling,
            sample_fraction: self.sample_fraction,
            rng_seed: self.rng_seed,
            bop_mode: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionNode<T> {
    /// `(variable, threshold)`; rows with `z <= threshold` go left.
    pub split: Option<(usize, T)>,
    pub children: Option<(usize, usize)>,
    /// Mean response of the in-bag rows reaching the node.
    pub value: T,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree<T> {
    pub nodes: Vec<RegressionNode<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    #[inline]
    pub fn leaf_by<F: Fn(usize) -> T>(&self, z_at: F) -> usize {
        let mut id = 0;
        while let (Some((var, thr)), Some((l, r))) = (self.nodes[id].split, self.nodes[id].children) {
            id = if z_at(var) <= thr { l } else { r };
        }
        id
    }

    pub fn predict_by<F: Fn(usize) -> T>(&self, z_at: F) -> T {
        self.nodes[self.leaf_by(z_at)].value
    }

    pub fn uses_variable(&self, var: usize) -> bool {
        self.nodes.iter().any(|n| matches!(n.split, Some((v, _)) if v == var))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest<T> {
    pub config: RegressionForestConfig,
    pub trees: Vec<RegressionTree<T>>,
    pub inbag: Vec<Inbag>,
    pub mtry: usize,
}

pub fn regression_forest_train<T: Scalar>(
    z: &DataMatrix<T>,
    response: &[T],
    cfg: &RegressionForestConfig,
) -> Result<RegressionForest<T>> {
    let n = z.nrows();
    if response.len() != n {
        return Err(RfccaError::Dimension(format!("{} responses for {n} rows", response.len())));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(RfccaError::InvalidData("regression response must be finite".into()));
    }
    if cfg.ntree == 0 || cfg.nodesize == 0 {
        return Err(RfccaError::InvalidConfig("ntree and nodesize must be positive".into()));
    }
    let r = z.ncols();
    let mtry = cfg.mtry.unwrap_or_else(|| default_mtry(r));
    if mtry == 0 || mtry > r {
        return Err(RfccaError::InvalidConfig(format!("mtry {mtry} must lie in 1..={r}")));
    }
    let sampling = cfg.as_sampling_config();
    let grown: Vec<(RegressionTree<T>, Inbag)> = (0..cfg.ntree)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.rng_seed, b as u64);
            let bag = Inbag::draw(n, &sampling, &mut rng);
            let tree = grow(&bag.multiset_rows(), z, response, cfg.nodesize, mtry, &mut rng);
            (tree, bag)
        })
        .collect();
    let (trees, inbag) = grown.into_iter().unzip();
    Ok(RegressionForest { config: cfg.clone(), trees, inbag, mtry })
}

fn mean<T: Scalar>(rows: &[usize], response: &[T]) -> T {
    rows.iter().map(|&i| response[i]).sum::<T>() / T::from_usize_lossy(rows.len().max(1))
}

fn grow<T: Scalar, R: Rng + ?Sized>(
    rows: &[usize],
    z: &DataMatrix<T>,
    response: &[T],
    nodesize: usize,
    mtry: usize,
    rng: &mut R,
) -> RegressionTree<T> {
    let mut nodes = vec![RegressionNode { split: None, children: None, value: mean(rows, response), rows: rows.to_vec() }];
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let Some((var, thr)) = best_split(&nodes[id].rows, nodes[id].value, z, response, nodesize, mtry, rng) else {
            continue;
        };
        let col = z.col(var);
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = nodes[id].rows.iter().partition(|&&i| col[i] <= thr);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(RegressionNode { split: None, children: None, value: mean(&l_rows, response), rows: l_rows });
        nodes.push(RegressionNode { split: None, children: None, value: mean(&r_rows, response), rows: r_rows });
        nodes[id].split = Some((var, thr));
        nodes[id].children = Some((l, r));
        stack.push(r);
        stack.push(l);
    }
    RegressionTree { nodes }
}

/// Exhaustive variance-reduction search over `mtry` random covariates.
fn best_split<T: Scalar, R: Rng + ?Sized>(
    rows: &[usize],
    node_mean: T,
    z: &DataMatrix<T>,
    response: &[T],
    nodesize: usize,
    mtry: usize,
    rng: &mut R,
) -> Option<(usize, T)> {
    let n = rows.len();
    if n < 2 * nodesize || n < 2 {
        return None;
    }
    let mut vars = sample(rng, z.ncols(), mtry).into_vec();
    vars.sort_unstable();
    let total: T = rows.iter().map(|&i| response[i] - node_mean).sum();
    let nt = T::from_usize_lossy(n);
    let base = total * total / nt;
    let mut best: Option<(T, usize, T)> = None;
    let mut order: Vec<(T, T)> = Vec::with_capacity(n);
    for var in vars {
        let col = z.col(var);
        order.clear();
        order.extend(rows.iter().map(|&i| (col[i], response[i] - node_mean)));
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite covariates"));
        let mut left = T::zero();
        for k in 1..n {
            left += order[k - 1].1;
            if k < nodesize || n - k < nodesize || order[k - 1].0 >= order[k].0 {
                continue;
            }
            let kl = T::from_usize_lossy(k);
            let kr = T::from_usize_lossy(n - k);
            let right = total - left;
            let gain = left * left / kl + right * right / kr - base;
            if gain > T::zero() && best.as_ref().is_none_or(|b| gain > b.0) {
                let (lo, hi) = (order[k - 1].0, order[k].0);
                let mid = lo + (hi - lo) / T::lit(2.0);
                let thr = if mid > lo && mid < hi { mid } else { lo };
                best = Some((gain, var, thr));
            }
        }
    }
    best.map(|(_, var, thr)| (var, thr))
}

impl<T: Scalar> RegressionForest<T> {
    /// Average of the trees' leaf means.
    pub fn predict(&self, z_row: &[T]) -> T {
        let sum: T = self.trees.iter().map(|t| t.predict_by(|j| z_row[j])).sum();
        sum / T::from_usize_lossy(self.trees.len())
    }

    /// The prediction as a weighted sum of training responses: each tree
    /// spreads weight `1 / ntree` evenly over its leaf's in-bag rows.
    pub fn prediction_weights(&self, z_row: &[T], n: usize) -> Vec<T> {
        let mut w = vec![T::zero(); n];
        let per_tree = T::one() / T::from_usize_lossy(self.trees.len());
        for tree in &self.trees {
            let leaf = &tree.nodes[tree.leaf_by(|j| z_row[j])];
            let share = per_tree / T::from_usize_lossy(leaf.rows.len());
            for &i in &leaf.rows {
                w[i] += share;
            }
        }
        w
    }

    /// OOB mean squared error over rows with at least one OOB tree.
    pub fn oob_mse(&self, z: &DataMatrix<T>, response: &[T]) -> Option<T> {
        let n = z.nrows();
        let mut sum = T::zero();
        let mut used = 0usize;
        for i in 0..n {
            let (s, c) = self
                .trees
                .iter()
                .zip(&self.inbag)
                .filter(|(_, bag)| bag.is_oob(i))
                .fold((T::zero(), 0usize), |(s, c), (t, _)| (s + t.predict_by(|j| z.get(i, j)), c + 1));
            if c > 0 {
                let e = s / T::from_usize_lossy(c) - response[i];
                sum += e * e;
                used += 1;
            }
        }
        (used > 0).then(|| sum / T::from_usize_lossy(used))
    }
}
