//! Unsupervised CART tree on the covariates Z whose splits maximize the
//! heterogeneity `sqrt(n_L * n_R) * |rho_L - rho_R|` of the first canonical
//! correlation between X and Y in the two children.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cca::{first_canonical_correlation, CrossMoments};
use crate::error::{Result, RfccaError};
use crate::matrix::DataMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Minimum number of rows in a node created by a split.
    pub nodesize: usize,
    /// Covariates tried per node.
    pub mtry: usize,
    /// Random thresholds tried per covariate.
    pub nsplit: usize,
    /// Try every feasible threshold instead of `nsplit` random ones.
    #[serde(default)]
    pub exhaustive: bool,
    pub rng_seed: u64,
}

/// `max(1, ceil(r / 3))`.
pub fn default_mtry(r: usize) -> usize {
    r.div_ceil(3).max(1)
}

impl TreeConfig {
    /// nodesize `3(p+q)`, nsplit 10, mtry `ceil(r/3)`.
    pub fn default_for(p: usize, q: usize, r: usize) -> Self {
        Self { nodesize: 3 * (p + q), mtry: default_mtry(r), nsplit: 10, exhaustive: false, rng_seed: 0 }
    }

    pub fn validate(&self, p: usize, q: usize, r: usize) -> Result<()> {
        if self.nodesize <= p + q {
            return Err(RfccaError::InvalidConfig(format!(
                "nodesize {} must exceed p + q = {}",
                self.nodesize,
                p + q
            )));
        }
        if self.mtry == 0 || self.mtry > r {
            return Err(RfccaError::InvalidConfig(format!("mtry {} must lie in 1..={r}", self.mtry)));
        }
        if self.nsplit == 0 {
            return Err(RfccaError::InvalidConfig("nsplit must be at least 1".into()));
        }
        Ok(())
    }

    fn min_child(&self, dims: usize) -> usize {
        self.nodesize.max(dims + 1)
    }
}

/// A scored split of a node. Rows with `z[var_index] <= split_value` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate<T> {
    pub var_index: usize,
    pub split_value: T,
    pub statistic: T,
    pub rho_left: T,
    pub rho_right: T,
    pub left_rows: Vec<usize>,
    pub right_rows: Vec<usize>,
}

/// Why a candidate split is not eligible.
#[derive(Debug)]
pub enum Rejected {
    /// Threshold does not fall strictly inside the node's value range.
    OutOfRange,
    ChildTooSmall { left: usize, right: usize },
    /// Canonical correlation undefined in a child.
    Degenerate(RfccaError),
}

/// Split as stored in a grown tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord<T> {
    pub var_index: usize,
    pub split_value: T,
    pub statistic: T,
    pub rho_left: T,
    pub rho_right: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode<T> {
    /// Training rows reaching the node, sorted, repeats kept.
    pub rows: Vec<usize>,
    pub split: Option<SplitRecord<T>>,
    /// Arena indices of the left and right children.
    pub children: Option<(usize, usize)>,
}

impl<T> TreeNode<T> {
    pub fn is_terminal(&self) -> bool {
        self.children.is_none()
    }
}

/// Arena of nodes; index 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[0]
    }

    /// Terminal node reached by a covariate vector, given by accessor.
    #[inline]
    pub fn leaf_index_by<F: Fn(usize) -> T>(&self, z_at: F) -> usize {
        let mut id = 0;
        while let (Some(split), Some((l, r))) = (&self.nodes[id].split, self.nodes[id].children) {
            id = if z_at(split.var_index) <= split.split_value { l } else { r };
        }
        id
    }

    pub fn leaf_index(&self, z_row: &[T]) -> usize {
        self.leaf_index_by(|j| z_row[j])
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode<T>> {
        self.nodes.iter().filter(|n| n.is_terminal())
    }

    pub fn splits(&self) -> impl Iterator<Item = &SplitRecord<T>> {
        self.nodes.iter().filter_map(|n| n.split.as_ref())
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[TreeNode<T>], id: usize) -> usize {
            match nodes[id].children {
                Some((l, r)) => 1 + go(nodes, l).max(go(nodes, r)),
                None => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn uses_variable(&self, var: usize) -> bool {
        self.splits().any(|s| s.var_index == var)
    }
}

/// Training data laid out for the split search: centered `(x, y)` rows
/// concatenated row-major, plus the covariates.
pub struct SplitData<'a, T> {
    xy: Vec<T>,
    p: usize,
    q: usize,
    z: &'a DataMatrix<T>,
}

impl<'a, T: Scalar> SplitData<'a, T> {
    pub fn new(x: &DataMatrix<T>, y: &DataMatrix<T>, z: &'a DataMatrix<T>) -> Result<Self> {
        let n = x.nrows();
        if y.nrows() != n || z.nrows() != n {
            return Err(RfccaError::Dimension(format!(
                "row counts differ: x {}, y {}, z {}",
                n,
                y.nrows(),
                z.nrows()
            )));
        }
        let (p, q) = (x.ncols(), y.ncols());
        let d = p + q;
        let mut xy = vec![T::zero(); n * d];
        for (offset, block) in [(0, x), (p, y)] {
            for j in 0..block.ncols() {
                let col = block.col(j);
                let mean = col.iter().copied().sum::<T>() / T::from_usize_lossy(n);
                for i in 0..n {
                    xy[i * d + offset + j] = col[i] - mean;
                }
            }
        }
        Ok(Self { xy, p, q, z })
    }

    #[inline]
    fn row(&self, i: usize) -> &[T] {
        let d = self.p + self.q;
        &self.xy[i * d..(i + 1) * d]
    }

    fn moments(&self, rows: &[usize]) -> CrossMoments<T> {
        let mut acc = CrossMoments::new(self.p + self.q);
        for &i in rows {
            acc.add(self.row(i));
        }
        acc
    }
}

#[inline]
fn heterogeneity<T: Scalar>(n_left: usize, n_right: usize, rho_left: T, rho_right: T) -> T {
    let nl = T::from_usize_lossy(n_left);
    let nr = T::from_usize_lossy(n_right);
    (nl * nr).sqrt() * (rho_left - rho_right).abs()
}

/// Midpoint of two consecutive order statistics, falling back to the lower
/// value when rounding would put the midpoint on either endpoint.
#[inline]
fn midpoint<T: Scalar>(lo: T, hi: T) -> T {
    let mid = lo + (hi - lo) / T::lit(2.0);
    if mid > lo && mid < hi {
        mid
    } else {
        lo
    }
}

/// Scores one threshold on one covariate for the rows of a node, computing
/// each child's canonical correlation from scratch.
pub fn evaluate_split<T: Scalar>(
    node_rows: &[usize],
    x: &DataMatrix<T>,
    y: &DataMatrix<T>,
    z_col: &[T],
    var_index: usize,
    threshold: T,
    cfg: &TreeConfig,
) -> std::result::Result<SplitCandidate<T>, Rejected> {
    let values = node_rows.iter().map(|&i| z_col[i]);
    let lo = values.clone().fold(T::infinity(), T::min);
    let hi = values.fold(T::neg_infinity(), T::max);
    if node_rows.is_empty() || !(threshold >= lo && threshold < hi) {
        return Err(Rejected::OutOfRange);
    }
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        node_rows.iter().partition(|&&i| z_col[i] <= threshold);
    let min_child = cfg.min_child(x.ncols() + y.ncols());
    if left_rows.len() < min_child || right_rows.len() < min_child {
        return Err(Rejected::ChildTooSmall { left: left_rows.len(), right: right_rows.len() });
    }
    let rho = |rows: &[usize]| first_canonical_correlation(&x.select_rows(rows), &y.select_rows(rows));
    let rho_left = rho(&left_rows).map_err(Rejected::Degenerate)?;
    let rho_right = rho(&right_rows).map_err(Rejected::Degenerate)?;
    Ok(SplitCandidate {
        var_index,
        split_value: threshold,
        statistic: heterogeneity(left_rows.len(), right_rows.len(), rho_left, rho_right),
        rho_left,
        rho_right,
        left_rows,
        right_rows,
    })
}

/// Best eligible split of a node, or `None` when the node must be terminal.
///
/// Draws `mtry` covariates without replacement and, for each, up to `nsplit`
/// thresholds among the gaps between distinct in-node values that leave both
/// children feasible. Ties keep the first maximum in (covariate index,
/// threshold draw order).
pub fn best_split<T: Scalar, R: Rng + ?Sized>(
    rows: &[usize],
    data: &SplitData<'_, T>,
    cfg: &TreeConfig,
    rng: &mut R,
) -> Option<SplitCandidate<T>> {
    let n = rows.len();
    let (p, q) = (data.p, data.q);
    let min_child = cfg.min_child(p + q);
    if n < 2 * min_child {
        return None;
    }
    let z = data.z;
    let r = z.ncols();
    let mut vars = sample(rng, r, cfg.mtry.min(r)).into_vec();
    vars.sort_unstable();

    let total = data.moments(rows);
    let mut order: Vec<(T, usize)> = Vec::with_capacity(n);
    // (statistic, var, gap position, rho_left, rho_right)
    let mut best: Option<(T, usize, usize, T, T)> = None;
    let mut best_order: Vec<(T, usize)> = Vec::new();

    for &var in &vars {
        let col = z.col(var);
        order.clear();
        order.extend(rows.iter().map(|&i| (col[i], i)));
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite covariates").then(a.1.cmp(&b.1)));

        let gaps: Vec<usize> = (min_child..=n - min_child).filter(|&k| order[k - 1].0 < order[k].0).collect();
        if gaps.is_empty() {
            continue;
        }
        let picks: Vec<usize> = if cfg.exhaustive || gaps.len() <= cfg.nsplit {
            gaps
        } else {
            sample(rng, gaps.len(), cfg.nsplit).into_iter().map(|g| gaps[g]).collect()
        };

        let mut by_position: Vec<usize> = (0..picks.len()).collect();
        by_position.sort_unstable_by_key(|&t| picks[t]);
        let mut scores: Vec<Option<(T, T, T)>> = vec![None; picks.len()];
        let mut left = CrossMoments::new(p + q);
        let mut consumed = 0;
        for &t in &by_position {
            let k = picks[t];
            while consumed < k {
                left.add(data.row(order[consumed].1));
                consumed += 1;
            }
            let right = total.minus(&left);
            if let (Ok(rl), Ok(rr)) = (left.first_correlation(p), right.first_correlation(p)) {
                let stat = heterogeneity(k, n - k, rl, rr);
                if stat.is_finite() {
                    scores[t] = Some((stat, rl, rr));
                }
            }
        }
        let mut improved = false;
        for (t, score) in scores.iter().enumerate() {
            if let Some((stat, rl, rr)) = *score {
                if best.as_ref().is_none_or(|b| stat > b.0) {
                    best = Some((stat, var, picks[t], rl, rr));
                    improved = true;
                }
            }
        }
        if improved {
            best_order.clone_from(&order);
        }
    }

    let (statistic, var_index, k, rho_left, rho_right) = best?;
    let split_value = midpoint(best_order[k - 1].0, best_order[k].0);
    let col = z.col(var_index);
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= split_value);
    debug_assert_eq!(left_rows.len(), k);
    Some(SplitCandidate { var_index, split_value, statistic, rho_left, rho_right, left_rows, right_rows })
}

/// Grows a tree on `rows` until no node has an eligible split.
pub fn grow_tree<T: Scalar, R: Rng + ?Sized>(
    rows: &[usize],
    x: &DataMatrix<T>,
    y: &DataMatrix<T>,
    z: &DataMatrix<T>,
    cfg: &TreeConfig,
    rng: &mut R,
) -> Result<Tree<T>> {
    let data = SplitData::new(x, y, z)?;
    grow_tree_with(rows, &data, cfg, rng)
}

pub(crate) fn grow_tree_with<T: Scalar, R: Rng + ?Sized>(
    rows: &[usize],
    data: &SplitData<'_, T>,
    cfg: &TreeConfig,
    rng: &mut R,
) -> Result<Tree<T>> {
    let dims = data.p + data.q;
    if rows.len() <= dims {
        return Err(RfccaError::DegenerateSample { n: rows.len(), dims });
    }
    let mut root_rows = rows.to_vec();
    root_rows.sort_unstable();
    let mut nodes = vec![TreeNode { rows: root_rows, split: None, children: None }];
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let Some(cand) = best_split(&nodes[id].rows, data, cfg, rng) else {
            continue;
        };
        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode { rows: cand.left_rows, split: None, children: None });
        nodes.push(TreeNode { rows: cand.right_rows, split: None, children: None });
        let node = &mut nodes[id];
        node.split = Some(SplitRecord {
            var_index: cand.var_index,
            split_value: cand.split_value,
            statistic: cand.statistic,
            rho_left: cand.rho_left,
            rho_right: cand.rho_right,
        });
        node.children = Some((left, right));
        stack.push(right);
        stack.push(left);
    }
    Ok(Tree { nodes })
}
