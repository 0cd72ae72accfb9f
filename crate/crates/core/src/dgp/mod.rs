//! Synthetic data with a known conditional canonical correlation.
//!
//! Covariates are equicorrelated normals. Each row gets a correlation
//! `rho(z) = logistic(beta0 + sum_l beta_l z_l + z_1^2)` over the important
//! covariates, coefficient vectors `a_j = max(0, 1 - s_x rho j)` (and `b`
//! likewise), and `(x, y)` is drawn from a normal with cross covariance
//! `rho * Sx a b' Sy`.
//!
//! By default `a` and `b` are rescaled to `a' Sx a = b' Sy b = 1`, which makes
//! the first canonical correlation of each row's distribution exactly
//! `rho(z)` and the joint covariance positive semidefinite. Set
//! `normalize = false` for the unscaled coefficients.

mod score;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use score::{accuracy_replicate, benchmark_cca, mae, AccuracyResult};

use crate::error::{Result, RfccaError};
use crate::linalg::{cholesky_in_place, lower_mul};
use crate::matrix::{default_names, DataMatrix};
use crate::rng::{substream, substream_seed};

/// Tolerance on the Schur complement pivots when checking that a row
/// covariance is positive semidefinite.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationLevel {
    Low,
    High,
}

impl CorrelationLevel {
    /// `(beta0, s_x, s_y)` of the setting.
    pub fn parameters(self) -> (f64, f64, f64) {
        match self {
            CorrelationLevel::Low => (-2.0, 0.7, 0.4),
            CorrelationLevel::High => (-0.3, 0.4, 0.3),
        }
    }

    /// Nominal correlation level: the constant correlation of the
    /// first null scenario.
    pub fn nominal(self) -> f64 {
        match self {
            CorrelationLevel::Low => 0.3,
            CorrelationLevel::High => 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Constant correlation, 10 independent covariates.
    H0Case1,
    /// Correlation driven by 5 covariates that are withheld and replaced
    /// with 10 independent ones.
    H0Case2,
    /// Correlation driven by 5 covariates, all observed.
    H1NoNoise,
    /// As `H1NoNoise` plus 5 independent noise covariates.
    H1Noise,
    AccuracyLow,
    AccuracyHigh,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::H0Case1,
        Scenario::H0Case2,
        Scenario::H1NoNoise,
        Scenario::H1Noise,
        Scenario::AccuracyLow,
        Scenario::AccuracyHigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::H0Case1 => "h0_case1",
            Scenario::H0Case2 => "h0_case2",
            Scenario::H1NoNoise => "h1_nonoise",
            Scenario::H1Noise => "h1_noise",
            Scenario::AccuracyLow => "accuracy_low",
            Scenario::AccuracyHigh => "accuracy_high",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Whether the scenario takes its correlation level from the caller;
    /// the accuracy presets fix it.
    pub fn level(self, requested: CorrelationLevel) -> CorrelationLevel {
        match self {
            Scenario::AccuracyLow => CorrelationLevel::Low,
            Scenario::AccuracyHigh => CorrelationLevel::High,
            _ => requested,
        }
    }

    pub fn config(self, level: CorrelationLevel, n: usize, seed: u64) -> DgpConfig {
        let level = self.level(level);
        let base = DgpConfig::setting(level, n, seed);
        match self {
            Scenario::H0Case1 => DgpConfig {
                r: 0,
                r_noise: 10,
                beta: Vec::new(),
                constant_rho: Some(level.nominal()),
                ..base
            },
            Scenario::H0Case2 => DgpConfig { r_noise: 10, withhold_important: true, ..base },
            Scenario::H1NoNoise => base,
            Scenario::H1Noise | Scenario::AccuracyLow | Scenario::AccuracyHigh => {
                DgpConfig { r_noise: 5, ..base }
            }
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = RfccaError;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|s| s.name()).collect();
            RfccaError::InvalidConfig(format!("unknown scenario '{s}', expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Covariates that drive the correlation.
    pub r: usize,
    /// Independent standard normal covariates appended after the important ones.
    pub r_noise: usize,
    pub rho_x: f64,
    pub rho_y: f64,
    pub rho_z: f64,
    pub beta0: f64,
    /// Length `r`.
    pub beta: Vec<f64>,
    pub s_x: f64,
    pub s_y: f64,
    /// Replaces the logit model with a fixed correlation.
    pub constant_rho: Option<f64>,
    /// Returns only the noise covariates, hiding the ones that drive rho.
    pub withhold_important: bool,
    pub normalize: bool,
    pub seed: u64,
}

impl DgpConfig {
    /// Five X, five Y, five important covariates with weights `1/r`.
    pub fn setting(level: CorrelationLevel, n: usize, seed: u64) -> Self {
        let (beta0, s_x, s_y) = level.parameters();
        let r = 5;
        Self {
            n,
            p: 5,
            q: 5,
            r,
            r_noise: 0,
            rho_x: 0.3,
            rho_y: 0.3,
            rho_z: 0.1,
            beta0,
            beta: vec![1.0 / r as f64; r],
            s_x,
            s_y,
            constant_rho: None,
            withhold_important: false,
            normalize: true,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RfccaError::InvalidConfig(m));
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return bad("n, p and q must be positive".into());
        }
        if self.observed_columns() == 0 {
            return bad("the dataset would have no covariates".into());
        }
        if self.beta.len() != self.r {
            return bad(format!("beta has {} weights for r = {}", self.beta.len(), self.r));
        }
        if self.constant_rho.is_none() && self.r == 0 {
            return bad("the logit model needs at least one important covariate".into());
        }
        if let Some(c) = self.constant_rho {
            if !(0.0..1.0).contains(&c) {
                return bad(format!("constant correlation {c} must lie in [0, 1)"));
            }
        }
        for (name, level) in [("rho_x", self.rho_x), ("rho_y", self.rho_y), ("rho_z", self.rho_z)] {
            if !(0.0..1.0).contains(&level) {
                return bad(format!("{name} = {level} must lie in [0, 1)"));
            }
        }
        let finite = [self.beta0, self.s_x, self.s_y].iter().chain(&self.beta).all(|v| v.is_finite());
        if !finite || self.s_x < 0.0 || self.s_y < 0.0 {
            return bad("beta0, beta and the slopes must be finite, slopes non-negative".into());
        }
        Ok(())
    }

    /// Number of covariate columns handed out.
    pub fn observed_columns(&self) -> usize {
        if self.withhold_important {
            self.r_noise
        } else {
            self.r + self.r_noise
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub x: DataMatrix<f64>,
    pub y: DataMatrix<f64>,
    pub z: DataMatrix<f64>,
    /// Population correlation of each row, in `(0, 1)` under the logit model.
    pub true_rho: Vec<f64>,
}

/// `(1 - rho) I + rho J`.
pub fn equicorrelation(dim: usize, rho: f64) -> Vec<f64> {
    let mut m = vec![rho; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

fn cholesky(mut m: Vec<f64>, dim: usize, what: &str) -> Result<Vec<f64>> {
    cholesky_in_place(&mut m, dim, None)
        .map_err(|e| RfccaError::Generator(format!("{what} is not positive definite (pivot {})", e.pivot)))?;
    Ok(m)
}

fn sym_mul(s: &[f64], dim: usize, v: &[f64]) -> Vec<f64> {
    (0..dim).map(|i| (0..dim).map(|k| s[k * dim + i] * v[k]).sum()).collect()
}

/// Draws the `n x (r + r_noise)` covariates: an equicorrelated block
/// followed by independent noise columns. Row `i` uses its own substream.
pub fn gen_covariates(cfg: &DgpConfig, seed: u64) -> Result<DataMatrix<f64>> {
    let (n, r, m) = (cfg.n, cfg.r, cfg.r + cfg.r_noise);
    if m == 0 {
        return Err(RfccaError::InvalidConfig("no covariates requested".into()));
    }
    let l = if r > 0 { cholesky(equicorrelation(r, cfg.rho_z), r, "covariate covariance")? } else { Vec::new() };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let u: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut row = vec![0.0; m];
            lower_mul(&l, r, &u[..r], &mut row[..r]);
            row[r..].copy_from_slice(&u[r..]);
            row
        })
        .collect();
    let mut names = default_names("z", r);
    names.extend(default_names("noise", cfg.r_noise));
    DataMatrix::from_rows(&rows, names)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Logit model on the important covariates; only `z_1` enters squared.
pub fn true_rho(z_row: &[f64], beta0: f64, beta: &[f64]) -> f64 {
    let lin: f64 = beta.iter().zip(z_row).map(|(b, z)| b * z).sum();
    let z1 = z_row.first().copied().unwrap_or(0.0);
    logistic(beta0 + lin + z1 * z1)
}

/// `max(0, 1 - s rho j)` for `j = 1..=dim`.
pub fn decaying_coefficients(rho: f64, s: f64, dim: usize) -> Vec<f64> {
    (1..=dim).map(|j| (1.0 - s * rho * j as f64).max(0.0)).collect()
}

fn nonzero_coefficients(rho: f64, s: f64, dim: usize) -> Vec<f64> {
    let mut c = decaying_coefficients(rho, s, dim);
    if c.iter().all(|&v| v == 0.0) {
        let first = 1.0 - s * rho;
        c[0] = if first == 0.0 { 1.0 } else { first };
    }
    c
}

/// Unscaled coefficient vectors for a row with correlation `rho`.
pub fn gen_coefficients(rho: f64, cfg: &DgpConfig) -> (Vec<f64>, Vec<f64>) {
    (decaying_coefficients(rho, cfg.s_x, cfg.p), decaying_coefficients(rho, cfg.s_y, cfg.q))
}

fn scaled(v: Vec<f64>, sigma: &[f64], dim: usize) -> Vec<f64> {
    let quad: f64 = sym_mul(sigma, dim, &v).iter().zip(&v).map(|(a, b)| a * b).sum();
    let f = quad.sqrt();
    v.into_iter().map(|c| c / f).collect()
}

/// Coefficients as used by the generator: never all zero, and rescaled
/// when `cfg.normalize` is set.
pub fn effective_coefficients(rho: f64, cfg: &DgpConfig) -> (Vec<f64>, Vec<f64>) {
    let a = nonzero_coefficients(rho, cfg.s_x, cfg.p);
    let b = nonzero_coefficients(rho, cfg.s_y, cfg.q);
    if cfg.normalize {
        (
            scaled(a, &equicorrelation(cfg.p, cfg.rho_x), cfg.p),
            scaled(b, &equicorrelation(cfg.q, cfg.rho_y), cfg.q),
        )
    } else {
        (a, b)
    }
}

/// Full `(p + q) x (p + q)` covariance of a row with correlation `rho`,
/// column-major.
pub fn row_covariance(rho: f64, cfg: &DgpConfig) -> Vec<f64> {
    let (p, q) = (cfg.p, cfg.q);
    let d = p + q;
    let sx = equicorrelation(p, cfg.rho_x);
    let sy = equicorrelation(q, cfg.rho_y);
    let (a, b) = effective_coefficients(rho, cfg);
    let sa = sym_mul(&sx, p, &a);
    let sb = sym_mul(&sy, q, &b);
    let mut m = vec![0.0; d * d];
    for j in 0..p {
        for i in 0..p {
            m[j * d + i] = sx[j * p + i];
        }
    }
    for j in 0..q {
        for i in 0..q {
            m[(p + j) * d + p + i] = sy[j * q + i];
        }
    }
    for i in 0..p {
        for j in 0..q {
            let c = rho * sa[i] * sb[j];
            m[(p + j) * d + i] = c;
            m[i * d + p + j] = c;
        }
    }
    m
}

struct XyFactors {
    sx: Vec<f64>,
    sy: Vec<f64>,
    lx: Vec<f64>,
}

impl XyFactors {
    fn new(cfg: &DgpConfig) -> Result<Self> {
        let sx = equicorrelation(cfg.p, cfg.rho_x);
        let sy = equicorrelation(cfg.q, cfg.rho_y);
        let lx = cholesky(sx.clone(), cfg.p, "X covariance")?;
        Ok(Self { sx, sy, lx })
    }

    /// One `(x, y)` draw: `x = Lx u`, then `y | x` from the conditional
    /// normal, whose covariance (the Schur complement) must be PSD.
    fn draw(&self, rho: f64, cfg: &DgpConfig, rng: &mut crate::rng::Rng, row: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let (p, q) = (cfg.p, cfg.q);
        let (a, b) = effective_coefficients(rho, cfg);
        let sa = sym_mul(&self.sx, p, &a);
        let sb = sym_mul(&self.sy, q, &b);
        let ata: f64 = sa.iter().zip(&a).map(|(u, v)| u * v).sum();
        let mut schur = self.sy.clone();
        let c = rho * rho * ata;
        for j in 0..q {
            for i in 0..q {
                schur[j * q + i] -= c * sb[i] * sb[j];
            }
        }
        cholesky_in_place(&mut schur, q, Some(PSD_TOL)).map_err(|e| {
            RfccaError::Generator(format!(
                "row {row}: covariance is not positive semidefinite (pivot {:.3e}, rho {rho})",
                e.pivot
            ))
        })?;
        let u: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let v: Vec<f64> = (0..q).map(|_| StandardNormal.sample(rng)).collect();
        let mut x = vec![0.0; p];
        lower_mul(&self.lx, p, &u, &mut x);
        let ax: f64 = a.iter().zip(&x).map(|(u, v)| u * v).sum();
        let mut y = vec![0.0; q];
        lower_mul(&schur, q, &v, &mut y);
        for (yi, s) in y.iter_mut().zip(&sb) {
            *yi += rho * s * ax;
        }
        Ok((x, y))
    }
}

/// Draws `(x, y)` given per-row correlations, one substream per row.
pub fn gen_xy_for_rho(rho: &[f64], cfg: &DgpConfig, seed: u64) -> Result<(DataMatrix<f64>, DataMatrix<f64>)> {
    let f = XyFactors::new(cfg)?;
    let draws: Vec<(Vec<f64>, Vec<f64>)> = rho
        .par_iter()
        .enumerate()
        .map(|(i, &r)| f.draw(r, cfg, &mut substream(seed, i as u64), i))
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<Vec<f64>>, Vec<Vec<f64>>) = draws.into_iter().unzip();
    Ok((DataMatrix::from_rows(&xs, default_names("x", cfg.p))?, DataMatrix::from_rows(&ys, default_names("y", cfg.q))?))
}

/// Correlations implied by the covariates (the first `r` columns drive the
/// logit model).
pub fn rho_for_covariates(z: &DataMatrix<f64>, cfg: &DgpConfig) -> Vec<f64> {
    match cfg.constant_rho {
        Some(c) => vec![c; z.nrows()],
        None => (0..z.nrows()).map(|i| true_rho(&z.row(i)[..cfg.r], cfg.beta0, &cfg.beta)).collect(),
    }
}

pub fn gen_xy(z: &DataMatrix<f64>, cfg: &DgpConfig, seed: u64) -> Result<(DataMatrix<f64>, DataMatrix<f64>, Vec<f64>)> {
    if z.ncols() < cfg.r {
        return Err(RfccaError::Dimension(format!("{} covariates, the model needs {}", z.ncols(), cfg.r)));
    }
    let rho = rho_for_covariates(z, cfg);
    let (x, y) = gen_xy_for_rho(&rho, cfg, seed)?;
    Ok((x, y, rho))
}

/// Generates a full dataset from `cfg.seed`.
pub fn simulate(cfg: &DgpConfig) -> Result<SimulatedDataset> {
    cfg.validate()?;
    let z_full = gen_covariates(cfg, substream_seed(cfg.seed, 0))?;
    let (x, y, true_rho) = gen_xy(&z_full, cfg, substream_seed(cfg.seed, 1))?;
    let z = if cfg.withhold_important {
        z_full.select_columns(&(cfg.r..cfg.r + cfg.r_noise).collect::<Vec<_>>())
    } else {
        z_full
    };
    Ok(SimulatedDataset { x, y, z, true_rho })
}
