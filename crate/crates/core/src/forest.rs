//! Forest training and canonical correlation estimation through bags of
//! observations for prediction (BOP).
//!
//! The BOP of a query is the multiset union, over trees, of the in-bag
//! training rows sharing the query's terminal node. The estimate is the
//! first canonical correlation of `(X, Y)` on those rows, each repeated as
//! many times as it appears.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::{cca_weighted, first_canonical_correlation};
use crate::error::{Result, RfccaError};
use crate::matrix::DataMatrix;
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::tree::{grow_tree_with, SplitData, Tree, TreeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `round(sample_fraction * n)` distinct rows per tree.
    SubsampleWithoutReplacement,
    /// `n` draws with replacement.
    Bootstrap,
}

/// How repeated rows in a BOP enter the canonical correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BopMode {
    /// Each occurrence is one observation.
    #[default]
    Multiset,
    /// Each distinct row counts once.
    Distinct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub ntree: usize,
    pub tree: TreeConfig,
    pub sampling: SamplingMode,
    pub sample_fraction: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub bop_mode: BopMode,
}

pub const DEFAULT_NTREE: usize = 200;
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.632;

impl ForestConfig {
    /// 200 trees, nodesize `3(p+q)`, nsplit 10, subsampling 63.2% of rows.
    pub fn default_for(p: usize, q: usize, r: usize) -> Self {
        Self {
            ntree: DEFAULT_NTREE,
            tree: TreeConfig::default_for(p, q, r),
            sampling: SamplingMode::SubsampleWithoutReplacement,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            rng_seed: 0,
            bop_mode: BopMode::Multiset,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn bootstrap(mut self) -> Self {
        self.sampling = SamplingMode::Bootstrap;
        self.sample_fraction = 1.0;
        self
    }

    pub fn validate(&self, n: usize, p: usize, q: usize, r: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(RfccaError::InvalidConfig("ntree must be at least 1".into()));
        }
        self.tree.validate(p, q, r)?;
        match self.sampling {
            SamplingMode::Bootstrap if self.sample_fraction != 1.0 => {
                return Err(RfccaError::InvalidConfig("bootstrap sampling requires sample_fraction = 1".into()))
            }
            SamplingMode::SubsampleWithoutReplacement
                if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) =>
            {
                return Err(RfccaError::InvalidConfig(format!(
                    "sample_fraction {} must lie in (0, 1]",
                    self.sample_fraction
                )))
            }
            _ => {}
        }
        let in_bag = self.distinct_inbag(n);
        if in_bag <= p + q {
            return Err(RfccaError::DegenerateSample { n: in_bag, dims: p + q });
        }
        Ok(())
    }

    /// Distinct in-bag rows per tree in subsample mode; the draw count in
    /// bootstrap mode.
    pub fn distinct_inbag(&self, n: usize) -> usize {
        match self.sampling {
            SamplingMode::Bootstrap => n,
            SamplingMode::SubsampleWithoutReplacement => {
                ((self.sample_fraction * n as f64).round() as usize).clamp(1, n)
            }
        }
    }
}

/// Multiplicity of every training row in one tree's bag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inbag {
    counts: Vec<u32>,
}

impl Inbag {
    pub fn draw<R: Rng + ?Sized>(n: usize, cfg: &ForestConfig, rng: &mut R) -> Self {
        let mut counts = vec![0u32; n];
        match cfg.sampling {
            SamplingMode::SubsampleWithoutReplacement => {
                for i in sample(rng, n, cfg.distinct_inbag(n)) {
                    counts[i] = 1;
                }
            }
            SamplingMode::Bootstrap => {
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
            }
        }
        Self { counts }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn count(&self, row: usize) -> u32 {
        self.counts[row]
    }

    #[inline]
    pub fn is_oob(&self, row: usize) -> bool {
        self.counts[row] == 0
    }

    pub fn distinct_len(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// In-bag rows, ascending, each repeated by its multiplicity.
    pub fn multiset_rows(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
            .collect()
    }

    pub fn oob_rows(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&i| self.counts[i] == 0).collect()
    }
}

/// Bag of observations for prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bop {
    /// Training rows, repeats kept.
    pub rows: Vec<usize>,
    pub source_tree_count: usize,
}

impl Bop {
    pub fn counts(&self, n: usize) -> Vec<u32> {
        let mut counts = vec![0u32; n];
        for &i in &self.rows {
            counts[i] += 1;
        }
        counts
    }
}

/// A trained forest together with the training data its predictions need.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel<T> {
    pub config: ForestConfig,
    pub x: DataMatrix<T>,
    pub y: DataMatrix<T>,
    pub z: DataMatrix<T>,
    pub trees: Vec<Tree<T>>,
    pub inbag: Vec<Inbag>,
}

/// Trains `cfg.ntree` trees, tree `b` using substream `b` of `cfg.rng_seed`
/// for both its bag and its split search.
pub fn train<T: Scalar>(
    x: &DataMatrix<T>,
    y: &DataMatrix<T>,
    z: &DataMatrix<T>,
    cfg: &ForestConfig,
) -> Result<ForestModel<T>> {
    let n = x.nrows();
    let (p, q, r) = (x.ncols(), y.ncols(), z.ncols());
    if y.nrows() != n || z.nrows() != n {
        return Err(RfccaError::Dimension(format!(
            "row counts differ: x {n}, y {}, z {}",
            y.nrows(),
            z.nrows()
        )));
    }
    if n <= p + q {
        return Err(RfccaError::DegenerateSample { n, dims: p + q });
    }
    cfg.validate(n, p, q, r)?;
    let data = SplitData::new(x, y, z)?;
    let grown: Vec<(Tree<T>, Inbag)> = (0..cfg.ntree)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.rng_seed, b as u64);
            let inbag = Inbag::draw(n, cfg, &mut rng);
            let tree = grow_tree_with(&inbag.multiset_rows(), &data, &cfg.tree, &mut rng)?;
            Ok((tree, inbag))
        })
        .collect::<Result<_>>()?;
    let (trees, inbag) = grown.into_iter().unzip();
    Ok(ForestModel { config: cfg.clone(), x: x.clone(), y: y.clone(), z: z.clone(), trees, inbag })
}

impl<T: Scalar> ForestModel<T> {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn r(&self) -> usize {
        self.z.ncols()
    }

    /// Full-sample first canonical correlation.
    pub fn root_correlation(&self) -> Result<T> {
        first_canonical_correlation(&self.x, &self.y)
    }

    fn check_query(&self, z_new: &[T]) -> Result<()> {
        if z_new.len() != self.r() {
            return Err(RfccaError::Dimension(format!(
                "query has {} covariates, model expects {}",
                z_new.len(),
                self.r()
            )));
        }
        if z_new.iter().any(|v| !v.is_finite()) {
            return Err(RfccaError::InvalidData("query covariates must be finite".into()));
        }
        Ok(())
    }

    pub fn bop_for_new(&self, z_new: &[T]) -> Result<Bop> {
        self.check_query(z_new)?;
        let mut rows = Vec::new();
        for tree in &self.trees {
            rows.extend_from_slice(&tree.nodes[tree.leaf_index(z_new)].rows);
        }
        Ok(Bop { rows, source_tree_count: self.trees.len() })
    }

    pub fn predict_rho(&self, z_new: &[T]) -> Result<T> {
        self.check_query(z_new)?;
        let mut counts = vec![0u32; self.n()];
        for tree in &self.trees {
            for &i in &tree.nodes[tree.leaf_index(z_new)].rows {
                counts[i] += 1;
            }
        }
        self.rho_from_counts(&counts)
    }

    /// Per-row predictions for a covariate matrix; errors are per row.
    pub fn predict(&self, z_new: &DataMatrix<T>) -> Result<Vec<Result<T>>> {
        if z_new.ncols() != self.r() {
            return Err(RfccaError::Dimension(format!(
                "query has {} covariate columns, model expects {}",
                z_new.ncols(),
                self.r()
            )));
        }
        Ok((0..z_new.nrows()).into_par_iter().map(|i| self.predict_rho(&z_new.row(i))).collect())
    }

    /// Canonical correlation of the rows with nonzero count.
    pub fn rho_from_counts(&self, counts: &[u32]) -> Result<T> {
        let dims = self.p() + self.q();
        let rows: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
        if rows.len() <= dims {
            return Err(RfccaError::DegenerateBop { distinct: rows.len(), dims });
        }
        // equal multiplicities do not change the correlation; unit weights
        // keep the arithmetic identical to the unweighted analysis
        let first = counts[rows[0]];
        let uniform = rows.iter().all(|&i| counts[i] == first);
        let weights: Vec<T> = match self.config.bop_mode {
            BopMode::Multiset if !uniform => rows.iter().map(|&i| T::lit(counts[i] as f64)).collect(),
            _ => vec![T::one(); rows.len()],
        };
        Ok(cca_weighted(&self.x, &self.y, &rows, &weights, false)?.first())
    }

    /// Out-of-bag BOP of training row `i`: in-bag rows sharing its terminal
    /// node, over the trees where `i` is out of bag. `None` when `i` is in
    /// every bag.
    pub fn oob_bop(&self, i: usize) -> Option<Bop> {
        let mut rows = Vec::new();
        let mut used = 0;
        for (tree, bag) in self.trees.iter().zip(&self.inbag) {
            if bag.is_oob(i) {
                let leaf = tree.leaf_index_by(|j| self.z.get(i, j));
                rows.extend_from_slice(&tree.nodes[leaf].rows);
                used += 1;
            }
        }
        (used > 0).then_some(Bop { rows, source_tree_count: used })
    }

    /// Out-of-bag estimate for every training row; `None` marks a missing
    /// estimate (never out of bag, or a degenerate bag).
    pub fn oob_estimates(&self) -> Vec<Option<T>> {
        let n = self.n();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let bop = self.oob_bop(i)?;
                self.rho_from_counts(&bop.counts(n)).ok()
            })
            .collect()
    }
}
