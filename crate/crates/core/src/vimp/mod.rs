//! Two-step variable importance.
//!
//! Step 1 fits the correlation forest and collects the out-of-bag estimates
//! of the conditional correlation. Step 2 regresses those estimates on Z with
//! a plain regression forest and measures, tree by tree, how much the OOB
//! squared error grows when one covariate is permuted among the OOB rows.

mod regression;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use regression::{
    regression_forest_train, RegressionForest, RegressionForestConfig, RegressionNode, RegressionTree,
};

use crate::error::{Result, RfccaError};
use crate::forest::{train, ForestConfig};
use crate::matrix::DataMatrix;
use crate::rng::{substream, substream_seed};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimpResult<T> {
    /// One entry per Z column; can be negative.
    pub importances: Vec<T>,
    /// 1 is the most important column.
    pub ranks: Vec<usize>,
}

impl<T: Scalar> VimpResult<T> {
    pub fn from_importances(importances: Vec<T>) -> Self {
        let ranks = ranks_descending(&importances);
        Self { importances, ranks }
    }
}

/// Ranks by decreasing value, ties to the lower column index.
pub fn ranks_descending<T: Scalar>(values: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut ranks = vec![0; values.len()];
    for (rank, &j) in order.iter().enumerate() {
        ranks[j] = rank + 1;
    }
    ranks
}

/// OOB permutation importance of every column of `z` in a fitted forest.
///
/// Columns that no split of a tree uses contribute exactly zero for that
/// tree. Trees with no OOB rows are skipped.
pub fn permutation_importance<T: Scalar>(
    forest: &RegressionForest<T>,
    z: &DataMatrix<T>,
    response: &[T],
    seed: u64,
) -> Vec<T> {
    let r = z.ncols();
    let per_tree: Vec<Option<Vec<T>>> = forest
        .trees
        .par_iter()
        .zip(&forest.inbag)
        .enumerate()
        .map(|(b, (tree, bag))| {
            let oob = bag.oob_rows();
            if oob.is_empty() {
                return None;
            }
            let m = T::from_usize_lossy(oob.len());
            let mse = |pred: &dyn Fn(usize) -> T| -> T {
                oob.iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let e = pred(k) - response[i];
                        e * e
                    })
                    .sum::<T>()
                    / m
            };
            let base = mse(&|k| tree.predict_by(|j| z.get(oob[k], j)));
            let tree_seed = substream_seed(seed, b as u64);
            let deltas = (0..r)
                .map(|var| {
                    if !tree.uses_variable(var) {
                        return T::zero();
                    }
                    let mut rng = substream(tree_seed, var as u64);
                    let mut shuffled = oob.clone();
                    shuffled.shuffle(&mut rng);
                    let col = z.col(var);
                    mse(&|k| tree.predict_by(|j| if j == var { col[shuffled[k]] } else { z.get(oob[k], j) })) - base
                })
                .collect();
            Some(deltas)
        })
        .collect();
    let mut total = vec![T::zero(); r];
    let mut used = 0usize;
    for deltas in per_tree.into_iter().flatten() {
        used += 1;
        for (t, d) in total.iter_mut().zip(deltas) {
            *t += d;
        }
    }
    if used > 0 {
        let u = T::from_usize_lossy(used);
        total.iter_mut().for_each(|t| *t /= u);
    }
    total
}

/// Importance of each Z column for a response given row by row; rows
/// without a value are dropped first.
pub fn vimp_from_response<T: Scalar>(
    z: &DataMatrix<T>,
    response: &[Option<T>],
    reg_cfg: &RegressionForestConfig,
) -> Result<VimpResult<T>> {
    if response.len() != z.nrows() {
        return Err(RfccaError::Dimension(format!("{} responses for {} rows", response.len(), z.nrows())));
    }
    let keep: Vec<usize> = (0..response.len()).filter(|&i| response[i].is_some()).collect();
    if keep.is_empty() {
        return Err(RfccaError::NoEstimates);
    }
    let values: Vec<T> = keep.iter().map(|&i| response[i].unwrap()).collect();
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Ok(VimpResult::from_importances(vec![T::zero(); z.ncols()]));
    }
    let z_kept = if keep.len() == z.nrows() { z.clone() } else { z.select_rows(&keep) };
    let forest = regression_forest_train(&z_kept, &values, reg_cfg)?;
    let importances = permutation_importance(&forest, &z_kept, &values, substream_seed(reg_cfg.rng_seed, u64::MAX));
    Ok(VimpResult::from_importances(importances))
}

/// Full two-step procedure: correlation forest, then surrogate importance.
pub fn vimp<T: Scalar>(
    x: &DataMatrix<T>,
    y: &DataMatrix<T>,
    z: &DataMatrix<T>,
    cfg: &ForestConfig,
    reg_cfg: &RegressionForestConfig,
) -> Result<VimpResult<T>> {
    let model = train(x, y, z, cfg)?;
    vimp_from_response(z, &model.oob_estimates(), reg_cfg)
}
