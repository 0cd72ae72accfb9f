use serde::{Deserialize, Serialize};

use super::{simulate, DgpConfig, SimulatedDataset};
use crate::cca::first_canonical_correlation;
use crate::error::{Result, RfccaError};
use crate::forest::{train, ForestConfig};
use crate::rng::substream_seed;

/// Mean absolute error.
pub fn mae(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(RfccaError::InvalidData(format!(
            "{} estimates for {} true values",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(RfccaError::InvalidData("no values to score".into()));
    }
    if estimates.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(RfccaError::InvalidData("non-finite value in MAE input".into()));
    }
    Ok(estimates.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum::<f64>() / estimates.len() as f64)
}

/// MAE of the unconditional training correlation used for every test row.
pub fn benchmark_cca(train_set: &SimulatedDataset, test_set: &SimulatedDataset) -> Result<f64> {
    let rho = first_canonical_correlation(&train_set.x, &train_set.y)?;
    mae(&vec![rho; test_set.true_rho.len()], &test_set.true_rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub seed: u64,
    pub mae_rfcca: f64,
    pub mae_cca: f64,
    /// Test rows without a forest estimate; excluded from `mae_rfcca`.
    pub failed_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
}

/// One train/test replicate: datasets from substreams 0 and 1 of `seed`,
/// forest seeded from substream 2.
pub fn accuracy_replicate(
    dgp: &DgpConfig,
    n_train: usize,
    n_test: usize,
    forest: &ForestConfig,
    seed: u64,
) -> Result<AccuracyResult> {
    let train_set = simulate(&dgp.clone().with_n(n_train).with_seed(substream_seed(seed, 0)))?;
    let test_set = simulate(&dgp.clone().with_n(n_test).with_seed(substream_seed(seed, 1)))?;
    let cfg = forest.clone().with_seed(substream_seed(seed, 2));
    let model = train(&train_set.x, &train_set.y, &train_set.z, &cfg)?;
    let preds = model.predict(&test_set.z)?;
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for (p, &t) in preds.iter().zip(&test_set.true_rho) {
        if let Ok(v) = p {
            est.push(*v);
            truth.push(t);
        }
    }
    let failed_rows = n_test - est.len();
    if est.is_empty() {
        return Err(RfccaError::NoEstimates);
    }
    Ok(AccuracyResult {
        seed,
        mae_rfcca: mae(&est, &truth)?,
        mae_cca: benchmark_cca(&train_set, &test_set)?,
        failed_rows,
        n_train,
        n_test,
    })
}
