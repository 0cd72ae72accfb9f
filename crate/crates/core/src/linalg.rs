//! Small dense kernels on column-major storage: Householder QR, Cholesky,
//! triangular solves and a one-sided Jacobi SVD.
//!
//! The matrices handled here are at most a few dozen columns wide, so the
//! routines favor simplicity over blocking.

use crate::scalar::Scalar;

/// Thin Householder QR of an `m x k` matrix, `m >= k`.
///
/// Storage follows the LAPACK convention: `R` on and above the diagonal,
/// reflector tails (with an implicit leading 1) below it.
#[derive(Debug, Clone)]
pub(crate) struct HouseholderQr<T> {
    m: usize,
    k: usize,
    a: Vec<T>,
    tau: Vec<T>,
}

impl<T: Scalar> HouseholderQr<T> {
    pub fn factor(mut a: Vec<T>, m: usize, k: usize) -> Self {
        assert!(m >= k, "QR needs at least as many rows as columns");
        assert_eq!(a.len(), m * k);
        let mut tau = vec![T::zero(); k];
        for j in 0..k {
            let (head, tail) = a.split_at_mut((j + 1) * m);
            let col = &mut head[j * m..];
            let norm = col[j..].iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
            if norm == T::zero() {
                continue;
            }
            let alpha = col[j];
            let beta = if alpha >= T::zero() { -norm } else { norm };
            let denom = alpha - beta;
            for v in col[j + 1..].iter_mut() {
                *v /= denom;
            }
            let t = (beta - alpha) / beta;
            tau[j] = t;
            col[j] = beta;
            for c in tail.chunks_exact_mut(m) {
                let mut s = c[j];
                for i in j + 1..m {
                    s += col[i] * c[i];
                }
                s *= t;
                c[j] -= s;
                for i in j + 1..m {
                    c[i] -= s * col[i];
                }
            }
        }
        Self { m, k, a, tau }
    }

    #[inline]
    pub fn r(&self, i: usize, j: usize) -> T {
        debug_assert!(i <= j);
        self.a[j * self.m + i]
    }

    /// True when some `|R_jj|` is below `RANK_TOL` times the largest one.
    pub fn is_rank_deficient(&self) -> bool {
        let diag: Vec<T> = (0..self.k).map(|j| self.r(j, j).abs()).collect();
        let max = diag.iter().fold(T::zero(), |m, &v| m.max(v));
        if max == T::zero() {
            return true;
        }
        let tol = max * T::lit(T::RANK_TOL);
        diag.iter().any(|&d| d < tol)
    }

    fn apply_reflector(&self, j: usize, b: &mut [T]) {
        let t = self.tau[j];
        if t == T::zero() {
            return;
        }
        let v = &self.a[j * self.m..(j + 1) * self.m];
        let mut s = b[j];
        for i in j + 1..self.m {
            s += v[i] * b[i];
        }
        s *= t;
        b[j] -= s;
        for i in j + 1..self.m {
            b[i] -= s * v[i];
        }
    }

    /// Explicit `m x k` orthonormal factor.
    pub fn thin_q(&self) -> Vec<T> {
        let mut q = vec![T::zero(); self.m * self.k];
        for (c, col) in q.chunks_exact_mut(self.m).enumerate() {
            col[c] = T::one();
            for j in (0..self.k).rev() {
                self.apply_reflector(j, col);
            }
        }
        q
    }

    /// Solves `R x = b` in place.
    pub fn solve_r(&self, b: &mut [T]) {
        for i in (0..self.k).rev() {
            let mut s = b[i];
            for j in i + 1..self.k {
                s -= self.r(i, j) * b[j];
            }
            b[i] = s / self.r(i, i);
        }
    }
}

/// Outcome of a failed Cholesky factorization: the offending pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NotPositive {
    pub index: usize,
    pub pivot: f64,
}

/// In-place lower Cholesky of a symmetric `n x n` matrix (lower triangle
/// read, upper triangle zeroed).
///
/// With `psd_tol = Some(t)`, pivots in `[-t, 0]` are accepted as zero and the
/// corresponding column of `L` is set to zero (semidefinite factorization).
pub(crate) fn cholesky_in_place<T: Scalar>(
    a: &mut [T],
    n: usize,
    psd_tol: Option<T>,
) -> Result<(), NotPositive> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            let l = a[k * n + j];
            d -= l * l;
        }
        if d <= T::zero() || !d.is_finite() {
            match psd_tol {
                Some(t) if d >= -t => {
                    for i in j..n {
                        a[j * n + i] = T::zero();
                    }
                    continue;
                }
                _ => return Err(NotPositive { index: j, pivot: d.as_f64() }),
            }
        }
        let ljj = d.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[j * n + i];
            for k in 0..j {
                s -= a[k * n + i] * a[k * n + j];
            }
            a[j * n + i] = s / ljj;
        }
    }
    for j in 1..n {
        for i in 0..j {
            a[j * n + i] = T::zero();
        }
    }
    Ok(())
}

/// Solves `L x = b` in place for lower triangular `L` (`n x n`, column-major).
/// Zero pivots (from a semidefinite factor) produce a zero component.
pub(crate) fn forward_solve<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[k * n + i] * b[k];
        }
        let d = l[i * n + i];
        b[i] = if d == T::zero() { T::zero() } else { s / d };
    }
}

/// `y = L x` for lower triangular `L`.
pub(crate) fn lower_mul<T: Scalar>(l: &[T], n: usize, x: &[T], y: &mut [T]) {
    for i in 0..n {
        let mut s = T::zero();
        for k in 0..=i {
            s += l[k * n + i] * x[k];
        }
        y[i] = s;
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Svd<T> {
    /// `m x n`, orthonormal columns.
    pub u: Vec<T>,
    /// Descending, length `n`.
    pub s: Vec<T>,
    /// `n x n` orthogonal.
    pub v: Vec<T>,
}

/// One-sided Jacobi SVD of an `m x n` matrix with `m >= n`.
pub(crate) fn jacobi_svd<T: Scalar>(mut a: Vec<T>, m: usize, n: usize) -> Svd<T> {
    assert!(m >= n);
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    rotate_to_orthogonal(&mut a, m, n, Some(&mut v));

    let norms: Vec<T> = a.chunks_exact(m).map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let s_max = order.first().map_or(T::zero(), |&i| norms[i]);
    let tiny = s_max * T::epsilon() * T::from_usize_lossy(m.max(1));
    let mut u = vec![T::zero(); m * n];
    let mut s = Vec::with_capacity(n);
    let mut vs = vec![T::zero(); n * n];
    let mut filled = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        vs[dst * n..(dst + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
        if sigma > tiny && sigma > T::zero() {
            let col = &a[src * m..(src + 1) * m];
            for i in 0..m {
                u[dst * m + i] = col[i] / sigma;
            }
            filled.push(dst);
        }
    }
    complete_orthonormal(&mut u, m, n, &filled);
    Svd { u, s, v: vs }
}

/// Singular values only, descending.
pub(crate) fn singular_values<T: Scalar>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let (mut work, rows, cols) = if m >= n {
        (a.to_vec(), m, n)
    } else {
        (transpose(a, m, n), n, m)
    };
    rotate_to_orthogonal(&mut work, rows, cols, None);
    let mut s: Vec<T> = work.chunks_exact(rows).map(|c| dot(c, c).sqrt()).collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

fn rotate_to_orthogonal<T: Scalar>(a: &mut [T], m: usize, n: usize, mut v: Option<&mut Vec<T>>) {
    let eps = T::epsilon();
    let mut norms = vec![T::zero(); n];
    for _sweep in 0..64 {
        for (j, nj) in norms.iter_mut().enumerate() {
            let c = &a[j * m..(j + 1) * m];
            *nj = dot(c, c);
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                let gamma = dot(&a[p * m..(p + 1) * m], &a[q * m..(q + 1) * m]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_columns(a, m, p, q, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
                if let Some(v) = v.as_deref_mut() {
                    rotate_columns(v, n, p, q, c, s);
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate_columns<T: Scalar>(a: &mut [T], m: usize, p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = a.split_at_mut(q * m);
    let cp = &mut lo[p * m..(p + 1) * m];
    let cq = &mut hi[..m];
    for i in 0..m {
        let x = cp[i];
        let y = cq[i];
        cp[i] = c * x - s * y;
        cq[i] = s * x + c * y;
    }
}

/// Fills the columns of `u` not listed in `filled` with unit vectors
/// orthogonal to everything already present.
fn complete_orthonormal<T: Scalar>(u: &mut [T], m: usize, n: usize, filled: &[usize]) {
    let mut done: Vec<usize> = filled.to_vec();
    let mut basis = 0usize;
    for dst in 0..n {
        if filled.contains(&dst) {
            continue;
        }
        loop {
            assert!(basis < m, "ran out of basis vectors while completing U");
            let mut cand = vec![T::zero(); m];
            cand[basis] = T::one();
            basis += 1;
            for _ in 0..2 {
                for &k in &done {
                    let col = &u[k * m..(k + 1) * m];
                    let proj = dot(col, &cand);
                    for i in 0..m {
                        cand[i] -= proj * col[i];
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > T::lit(1e-3) {
                for i in 0..m {
                    u[dst * m + i] = cand[i] / norm;
                }
                done.push(dst);
                break;
            }
        }
    }
}

pub(crate) fn transpose<T: Scalar>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut t = vec![T::zero(); m * n];
    for j in 0..n {
        for i in 0..m {
            t[i * n + j] = a[j * m + i];
        }
    }
    t
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}
