//! Global permutation test for an effect of the covariates on the canonical
//! correlation between X and Y.
//!
//! The statistic is the mean squared distance between the out-of-bag
//! conditional estimates and the full-sample canonical correlation. Its null
//! distribution is approximated by retraining the forest on row-permuted
//! covariates, which breaks any link between Z and `(X, Y)`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::first_canonical_correlation;
use crate::error::{Result, RfccaError};
use crate::forest::{train, ForestConfig};
use crate::matrix::DataMatrix;
use crate::rng::{substream, substream_seed};
use crate::scalar::Scalar;

/// Default number of permutations.
pub const DEFAULT_PERMUTATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PValueMode {
    /// `(1/R) * #{T'_r > T}`; can be exactly zero.
    #[default]
    Raw,
    /// `(1 + #{T'_r >= T}) / (R + 1)`, which counts the observed statistic
    /// as one of the permutations and is never zero.
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTestResult<T> {
    pub rho_root: T,
    pub statistic: T,
    /// Statistics of the successful permutation replicates, in replicate order.
    pub permuted: Vec<T>,
    pub p_value: f64,
    /// Replicates used, `requested - failed`.
    pub permutations: usize,
    pub requested: usize,
    pub failed: usize,
    /// Rows with an out-of-bag estimate in the unpermuted fit.
    pub n_used: usize,
    pub seed: u64,
    pub p_value_mode: PValueMode,
}

impl<T: Scalar> GlobalTestResult<T> {
    /// Recomputes the p-value from the stored statistics.
    pub fn recompute_p_value(&self) -> f64 {
        p_value(self.statistic, &self.permuted, self.p_value_mode)
    }
}

/// Mean squared deviation of the available estimates from `rho_root`.
pub fn test_statistic<T: Scalar>(oob_rhos: &[Option<T>], rho_root: T) -> Result<T> {
    let (sum, count) = oob_rhos
        .iter()
        .flatten()
        .fold((T::zero(), 0usize), |(s, c), &r| (s + (r - rho_root) * (r - rho_root), c + 1));
    if count == 0 {
        return Err(RfccaError::NoEstimates);
    }
    Ok(sum / T::from_usize_lossy(count))
}

pub fn p_value<T: Scalar>(statistic: T, permuted: &[T], mode: PValueMode) -> f64 {
    let r = permuted.len();
    match mode {
        PValueMode::Raw => {
            if r == 0 {
                return 1.0;
            }
            permuted.iter().filter(|&&t| t > statistic).count() as f64 / r as f64
        }
        PValueMode::Smoothed => {
            (1 + permuted.iter().filter(|&&t| t >= statistic).count()) as f64 / (r + 1) as f64
        }
    }
}

/// OOB statistic for one fit of the forest.
fn fitted_statistic<T: Scalar>(
    x: &DataMatrix<T>,
    y: &DataMatrix<T>,
    z: &DataMatrix<T>,
    cfg: &ForestConfig,
    rho_root: T,
) -> Result<(T, usize)> {
    let model = train(x, y, z, cfg)?;
    let oob = model.oob_estimates();
    let used = oob.iter().filter(|v| v.is_some()).count();
    Ok((test_statistic(&oob, rho_root)?, used))
}

/// Runs the test with `permutations` replicates.
///
/// The unpermuted fit uses `cfg` as given. Replicate `r` permutes the rows of
/// Z with substream `r` of `seed` and trains with the same configuration,
/// except for a forest seed derived from `(cfg.rng_seed, r)`. Replicates
/// whose fit fails are dropped and counted in `failed`.
pub fn global_test<T: Scalar>(
    x: &DataMatrix<T>,
    y: &DataMatrix<T>,
    z: &DataMatrix<T>,
    cfg: &ForestConfig,
    permutations: usize,
    seed: u64,
    mode: PValueMode,
) -> Result<GlobalTestResult<T>> {
    if permutations == 0 {
        return Err(RfccaError::InvalidConfig("at least one permutation is required".into()));
    }
    let rho_root = first_canonical_correlation(x, y)?;
    let (statistic, n_used) = fitted_statistic(x, y, z, cfg, rho_root)?;

    let n = z.nrows();
    let replicates: Vec<Option<T>> = (0..permutations)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let z_perm = z.select_rows(&perm);
            let cfg_r = ForestConfig { rng_seed: substream_seed(cfg.rng_seed, 1 + r as u64), ..cfg.clone() };
            fitted_statistic(x, y, &z_perm, &cfg_r, rho_root).ok().map(|(t, _)| t)
        })
        .collect();
    let permuted: Vec<T> = replicates.iter().flatten().copied().collect();
    let failed = permutations - permuted.len();
    Ok(GlobalTestResult {
        rho_root,
        statistic,
        p_value: p_value(statistic, &permuted, mode),
        permutations: permuted.len(),
        permuted,
        requested: permutations,
        failed,
        n_used,
        seed,
        p_value_mode: mode,
    })
}
