//! One-sided (Hestenes) Jacobi SVD and the pseudoinverse built on it.

use super::matrix::{dot, DenseMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Default relative cutoff below which singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Thin singular value decomposition `M = U diag(s) Vᵀ`.
///
/// With `r = min(rows, cols)`: `u` is `rows × r`, `v` is `cols × r`, and
/// `singular_values` has length `r`, sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    /// Number of singular values above `rel_tol * σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|s| **s > rel_tol * smax).count()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.singular_values.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose())
            .expect("SVD factors have consistent shapes")
    }
}

pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::InvalidArgument("svd of non-finite matrix".into()));
    }
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

/// Jacobi on the columns of a matrix with `rows >= cols`.
fn jacobi_tall(m: &DenseMatrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    // Column-major working copies.
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNonConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let smax = norms.iter().copied().fold(0.0, f64::max);
    let zero_cut = smax * f64::EPSILON * (rows.max(n) as f64);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] > zero_cut && norms[j] > 0.0 {
            u_cols.push(a[j].iter().map(|x| x / norms[j]).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            pending.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &pending);

    let singular_values = order.iter().map(|&j| norms[j]).collect();
    let v_cols: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();
    Ok(Svd {
        u: DenseMatrix::from_columns(&u_cols)?,
        singular_values,
        v: DenseMatrix::from_columns(&v_cols)?,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the columns listed in `pending` with unit vectors orthogonal to all
/// other columns (Gram–Schmidt over the standard basis).
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize]) {
    if pending.is_empty() {
        return;
    }
    let dim = cols[0].len();
    let mut candidate = 0usize;
    for &slot in pending {
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (k, col) in cols.iter().enumerate() {
                    if k == slot || col.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let proj = dot(&e, col);
                    for (ei, ci) in e.iter_mut().zip(col) {
                        *ei -= proj * ci;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if nrm > 1e-8 {
                cols[slot] = e.into_iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}

/// Moore–Penrose pseudoinverse; singular values at or below
/// `rank_tol * σ_max` are treated as zero.
pub fn pinv(m: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    let f = svd(m)?;
    Ok(pinv_from_svd(&f, rank_tol))
}

pub fn pinv_from_svd(f: &Svd, rank_tol: f64) -> DenseMatrix {
    let smax = f.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rank_tol * smax;
    let (n, r) = f.v.shape();
    let m = f.u.rows();
    let mut out = DenseMatrix::zeros(n, m);
    for (k, s) in f.singular_values.iter().enumerate().take(r) {
        if *s <= cutoff || *s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..n {
            let vik = f.v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += vik * f.u[(j, k)];
            }
        }
    }
    out
}

pub fn rank(m: &DenseMatrix, rel_tol: f64) -> Result<usize> {
    Ok(svd(m)?.rank(rel_tol))
}
