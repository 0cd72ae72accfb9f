//! Canonical correlation analysis.
//!
//! The production route factors both centered blocks with Householder QR,
//! `Xc = Qx Rx` and `Yc = Qy Ry`, and reads the canonical correlations off the
//! singular values of `Qxᵀ Qy`. The coefficient vectors follow from
//! `a = Rx⁻¹ u`, `b = Ry⁻¹ v` for the singular vector pairs `(u, v)`.
//!
//! Only the first canonical correlation is used by the forest; the remaining
//! pairs are reported for completeness.
//!
//! [`CrossMoments`] evaluates the first canonical correlation from running
//! sums of cross products. It is the same factorization in disguise
//! (`RxᵀRx = XcᵀXc` is the Cholesky factor of the Gram matrix) and lets the
//! split search score many thresholds from one sorted pass over a node.

use crate::error::{Block, Result, RfccaError};
use crate::linalg::{cholesky_in_place, dot, forward_solve, jacobi_svd, singular_values, transpose, HouseholderQr};
use crate::matrix::DataMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CcaResult<T> {
    /// Canonical correlations, non-increasing, each in `[0, 1]`.
    pub correlations: Vec<T>,
    /// `p x k` column-major, `k = min(p, q)`.
    pub coef_a: Vec<T>,
    /// `q x k` column-major.
    pub coef_b: Vec<T>,
    pub p: usize,
    pub q: usize,
}

impl<T: Scalar> CcaResult<T> {
    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    pub fn first(&self) -> T {
        self.correlations[0]
    }

    pub fn a(&self, j: usize) -> &[T] {
        &self.coef_a[j * self.p..(j + 1) * self.p]
    }

    pub fn b(&self, j: usize) -> &[T] {
        &self.coef_b[j * self.q..(j + 1) * self.q]
    }
}

/// Subtracts each column's sample mean.
pub fn center_columns<T: Scalar>(m: &DataMatrix<T>) -> Result<DataMatrix<T>> {
    if let Some(v) = m.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(RfccaError::InvalidData(format!("non-finite entry {v}")));
    }
    Ok(m.map_columns(|_, c| {
        let mut out = c.to_vec();
        center_in_place(&mut out);
        out
    }))
}

fn center_in_place<T: Scalar>(c: &mut [T]) {
    let n = T::from_usize_lossy(c.len());
    // second pass removes the rounding left by the first
    for _ in 0..2 {
        let mean = c.iter().copied().sum::<T>() / n;
        for v in c.iter_mut() {
            *v -= mean;
        }
    }
}

/// All `min(p, q)` canonical correlations and coefficient pairs of `x` and `y`.
pub fn cca<T: Scalar>(x: &DataMatrix<T>, y: &DataMatrix<T>) -> Result<CcaResult<T>> {
    let (n, p, q) = check_shapes(x, y)?;
    let xc = center_columns(x)?;
    let yc = center_columns(y)?;
    solve_centered(
        xc.as_slice().to_vec(),
        yc.as_slice().to_vec(),
        n,
        p,
        q,
        T::from_usize_lossy(n - 1),
        true,
    )
}

/// First canonical correlation, `cca(x, y).correlations[0]`.
pub fn first_canonical_correlation<T: Scalar>(x: &DataMatrix<T>, y: &DataMatrix<T>) -> Result<T> {
    let (n, p, q) = check_shapes(x, y)?;
    let xc = center_columns(x)?;
    let yc = center_columns(y)?;
    let r = solve_centered(xc.as_slice().to_vec(), yc.as_slice().to_vec(), n, p, q, T::one(), false)?;
    Ok(r.correlations[0])
}

/// Canonical correlation analysis of the rows `rows` of `x` and `y`, row
/// `rows[i]` counted as `weights[i]` repeated observations.
///
/// `rows` should not repeat; the degeneracy rule applies to the number of
/// distinct rows.
pub fn cca_weighted<T: Scalar>(
    x: &DataMatrix<T>,
    y: &DataMatrix<T>,
    rows: &[usize],
    weights: &[T],
    with_coefficients: bool,
) -> Result<CcaResult<T>> {
    if x.nrows() != y.nrows() {
        return Err(RfccaError::Dimension(format!(
            "x has {} rows but y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if rows.len() != weights.len() {
        return Err(RfccaError::Dimension("rows and weights differ in length".into()));
    }
    let (p, q) = (x.ncols(), y.ncols());
    let m = rows.len();
    if m <= p + q {
        return Err(RfccaError::DegenerateSample { n: m, dims: p + q });
    }
    if weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
        return Err(RfccaError::InvalidData("weights must be positive and finite".into()));
    }
    let total: T = weights.iter().copied().sum();
    let sqrt_w: Vec<T> = weights.iter().map(|w| w.sqrt()).collect();
    let gather = |mat: &DataMatrix<T>| {
        let mut out = Vec::with_capacity(m * mat.ncols());
        for j in 0..mat.ncols() {
            let col = mat.col(j);
            let mut mean = rows.iter().zip(weights).fold(T::zero(), |s, (&r, &w)| s + w * col[r]) / total;
            let start = out.len();
            out.extend(rows.iter().map(|&r| col[r] - mean));
            mean = out[start..].iter().zip(weights).fold(T::zero(), |s, (&v, &w)| s + w * v) / total;
            for (v, &s) in out[start..].iter_mut().zip(&sqrt_w) {
                *v = (*v - mean) * s;
            }
        }
        out
    };
    solve_centered(gather(x), gather(y), m, p, q, total - T::one(), with_coefficients)
}

fn check_shapes<T: Scalar>(x: &DataMatrix<T>, y: &DataMatrix<T>) -> Result<(usize, usize, usize)> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(RfccaError::Dimension(format!("x has {n} rows but y has {}", y.nrows())));
    }
    let (p, q) = (x.ncols(), y.ncols());
    if n <= p + q {
        return Err(RfccaError::DegenerateSample { n, dims: p + q });
    }
    Ok((n, p, q))
}

/// Core QR + SVD solve on centered (and possibly row-weighted) blocks.
/// `dof` is the divisor of the covariance used to normalize coefficients.
fn solve_centered<T: Scalar>(
    xc: Vec<T>,
    yc: Vec<T>,
    m: usize,
    p: usize,
    q: usize,
    dof: T,
    with_coefficients: bool,
) -> Result<CcaResult<T>> {
    let qr_x = HouseholderQr::factor(xc, m, p);
    if qr_x.is_rank_deficient() {
        return Err(RfccaError::RankDeficient { block: Block::X });
    }
    let qr_y = HouseholderQr::factor(yc, m, q);
    if qr_y.is_rank_deficient() {
        return Err(RfccaError::RankDeficient { block: Block::Y });
    }
    let qx = qr_x.thin_q();
    let qy = qr_y.thin_q();
    let mut cross = vec![T::zero(); p * q];
    for j in 0..q {
        let cy = &qy[j * m..(j + 1) * m];
        for i in 0..p {
            cross[j * p + i] = dot(&qx[i * m..(i + 1) * m], cy);
        }
    }
    let k = p.min(q);
    let clamp = |s: T| s.max(T::zero()).min(T::one());

    if !with_coefficients {
        let s = singular_values(&cross, p, q);
        return Ok(CcaResult {
            correlations: s.into_iter().take(k).map(clamp).collect(),
            coef_a: Vec::new(),
            coef_b: Vec::new(),
            p,
            q,
        });
    }

    // left vectors pair with X, right vectors with Y
    let (left, right, s) = if p >= q {
        let svd = jacobi_svd(cross, p, q);
        (svd.u, svd.v, svd.s)
    } else {
        let svd = jacobi_svd(transpose(&cross, p, q), q, p);
        (svd.v, svd.u, svd.s)
    };
    let scale = dof.sqrt();
    let mut coef_a = Vec::with_capacity(p * k);
    let mut coef_b = Vec::with_capacity(q * k);
    for j in 0..k {
        let mut a: Vec<T> = left[j * p..(j + 1) * p].to_vec();
        qr_x.solve_r(&mut a);
        coef_a.extend(a.into_iter().map(|v| v * scale));
        let mut b: Vec<T> = right[j * q..(j + 1) * q].to_vec();
        qr_y.solve_r(&mut b);
        coef_b.extend(b.into_iter().map(|v| v * scale));
    }
    Ok(CcaResult { correlations: s.into_iter().take(k).map(clamp).collect(), coef_a, coef_b, p, q })
}

/// Running first and second moments of concatenated `(x, y)` rows.
///
/// The product matrix keeps only its upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMoments<T> {
    dim: usize,
    count: T,
    sum: Vec<T>,
    prod: Vec<T>,
}

impl<T: Scalar> CrossMoments<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, count: T::zero(), sum: vec![T::zero(); dim], prod: vec![T::zero(); dim * dim] }
    }

    pub fn count(&self) -> T {
        self.count
    }

    #[inline]
    pub fn add(&mut self, row: &[T]) {
        debug_assert_eq!(row.len(), self.dim);
        self.count += T::one();
        for (s, &v) in self.sum.iter_mut().zip(row) {
            *s += v;
        }
        let d = self.dim;
        for j in 0..d {
            let vj = row[j];
            let col = &mut self.prod[j * d..j * d + j + 1];
            for (c, &vi) in col.iter_mut().zip(&row[..=j]) {
                *c += vi * vj;
            }
        }
    }

    /// Moments of the rows in `self` but not in `part`.
    pub fn minus(&self, part: &Self) -> Self {
        let sub = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x - y).collect::<Vec<T>>();
        Self {
            dim: self.dim,
            count: self.count - part.count,
            sum: sub(&self.sum, &part.sum),
            prod: sub(&self.prod, &part.prod),
        }
    }

    /// First canonical correlation between the first `p` coordinates and
    /// the remaining ones.
    ///
    /// Rank deficiency uses the square root of the scalar tolerance, since
    /// the Gram matrix squares the conditioning of the data.
    pub fn first_correlation(&self, p: usize) -> Result<T> {
        let d = self.dim;
        let q = d - p;
        let n = self.count;
        if n <= T::from_usize_lossy(d) {
            return Err(RfccaError::DegenerateSample { n: n.to_usize().unwrap_or(0), dims: d });
        }
        let cov = |i: usize, j: usize| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            self.prod[b * d + a] - self.sum[a] * self.sum[b] / n
        };
        let tol = T::lit(T::RANK_TOL.sqrt());
        let factor = |offset: usize, k: usize, block: Block| -> Result<Vec<T>> {
            let mut a = vec![T::zero(); k * k];
            for j in 0..k {
                for i in j..k {
                    a[j * k + i] = cov(offset + i, offset + j);
                }
            }
            cholesky_in_place(&mut a, k, None).map_err(|_| RfccaError::RankDeficient { block })?;
            let max = (0..k).map(|i| a[i * k + i]).fold(T::zero(), T::max);
            if (0..k).any(|i| a[i * k + i] < tol * max) {
                return Err(RfccaError::RankDeficient { block });
            }
            Ok(a)
        };
        let lx = factor(0, p, Block::X)?;
        let ly = factor(p, q, Block::Y)?;
        // W = Lx⁻¹ Cxy, then M = W Ly⁻ᵀ row by row
        let mut w = vec![T::zero(); p * q];
        for j in 0..q {
            let col = &mut w[j * p..(j + 1) * p];
            for (i, c) in col.iter_mut().enumerate() {
                *c = cov(i, p + j);
            }
            forward_solve(&lx, p, col);
        }
        let mut m = vec![T::zero(); p * q];
        let mut row = vec![T::zero(); q];
        for i in 0..p {
            for j in 0..q {
                row[j] = w[j * p + i];
            }
            forward_solve(&ly, q, &mut row);
            for j in 0..q {
                m[j * p + i] = row[j];
            }
        }
        let s = singular_values(&m, p, q);
        Ok(s[0].max(T::zero()).min(T::one()))
    }
}
