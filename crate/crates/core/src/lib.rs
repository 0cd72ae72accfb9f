//! Conditional canonical correlation estimation with random forests.
//!
//! Trees are grown with a split rule that maximizes the difference in
//! canonical correlation between the two children. For a covariate vector
//! `z`, the forest collects the training rows that share a leaf with `z`
//! (its bag of observations) and runs a canonical correlation analysis on
//! them. On top of the estimator the crate provides a permutation test for a
//! global effect of the covariates, a two-step variable importance, and a
//! simulator with known conditional correlations.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.
//!
//! ```
//! use rfcca::{dgp, forest, ForestConfig};
//!
//! let ds = dgp::simulate(&dgp::Scenario::H1NoNoise.config(dgp::CorrelationLevel::High, 150, 1)).unwrap();
//! let cfg = ForestConfig { ntree: 20, ..ForestConfig::default_for(5, 5, 5) }.with_seed(3);
//! let model = forest::train(&ds.x, &ds.y, &ds.z, &cfg).unwrap();
//! let rho = model.predict_rho(&ds.z.row(0)).unwrap();
//! assert!((0.0..=1.0).contains(&rho));
//! ```

pub mod cca;
pub mod dgp;
pub mod error;
pub mod forest;
pub mod inference;
pub mod io;
mod linalg;
pub mod matrix;
pub mod model_io;
pub mod rng;
pub mod scalar;
pub mod tree;
pub mod vimp;

pub use cca::{cca, first_canonical_correlation, CcaResult};
pub use error::{ErrorKind, Result, RfccaError};
pub use forest::{BopMode, ForestConfig, SamplingMode};
pub use inference::PValueMode;
pub use matrix::DataMatrix;
pub use scalar::Scalar;
pub use tree::TreeConfig;

pub type Matrix = DataMatrix<f64>;
pub type Forest = forest::ForestModel<f64>;
pub type Tree = tree::Tree<f64>;
pub type Cca = CcaResult<f64>;
pub type GlobalTest = inference::GlobalTestResult<f64>;
pub type Vimp = vimp::VimpResult<f64>;
pub type RegressionForest = vimp::RegressionForest<f64>;

pub type Matrix32 = DataMatrix<f32>;
pub type Forest32 = forest::ForestModel<f32>;
