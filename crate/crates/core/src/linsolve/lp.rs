//! Minimum ℓ∞ inflation LP:
//!
//! ```text
//! min t   s.t.  ‖r − Gβ‖∞ ≤ t,  ‖β‖∞ ≤ 1,  t ≥ 0
//! ```
//!
//! Solved with a dense bounded-variable primal simplex. Rows are
//!
//! ```text
//! −Gᵢβ − t + s⁺ᵢ = −rᵢ        (i = 1..n)
//!  Gᵢβ − t + s⁻ᵢ =  rᵢ        (i = 1..n)
//! ```
//!
//! with slacks `s ≥ 0`. The slacks form the starting basis; β starts at 0 and
//! `t` starts as a nonbasic variable resting at `‖r‖∞`, which is feasible.
//! Nonbasic variables may rest strictly inside their bounds; such a variable
//! can enter in either direction, and once it reaches a bound it never
//! returns to the interior, so the usual finiteness argument still applies.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

const PRICE_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-12;
/// Consecutive zero-length steps tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 32;

/// Optimal inflation radius and a witness coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InflationSolution {
    /// `‖r − Gβ‖∞` recomputed at the returned witness.
    pub t: f64,
    /// Witness in `[−1, 1]^K`.
    pub beta: Vec<f64>,
    pub pivots: usize,
}

/// Solves `min_{‖β‖∞ ≤ 1} ‖r − Gβ‖∞` where `G` is given generator-major:
/// `generators[j*n .. (j+1)*n]` is column `j` of the `n × K` matrix.
pub fn solve_min_inflation_flat(r: &[f64], generators: &[f64]) -> Result<InflationSolution> {
    let n = r.len();
    if n == 0 {
        return Err(Error::EmptyInput("residual vector"));
    }
    if generators.len() % n != 0 {
        return Err(Error::DimensionMismatch {
            op: "solve_min_inflation",
            left: format!("residual of length {n}"),
            right: format!("{} generator entries", generators.len()),
        });
    }
    if !r.iter().chain(generators).all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("LP data must be finite".into()));
    }
    let k = generators.len() / n;
    let mut lp = Tableau::new(r, generators, n, k);
    let pivots = lp.solve()?;
    let beta: Vec<f64> = lp.x[..k].iter().map(|b| b.clamp(-1.0, 1.0)).collect();
    let t = inf_residual(r, generators, &beta);
    Ok(InflationSolution { t, beta, pivots })
}

/// [`solve_min_inflation_flat`] with `G` as a dense `n × K` matrix.
pub fn solve_min_inflation(r: &[f64], g: &DenseMatrix) -> Result<InflationSolution> {
    if g.rows() != r.len() {
        return Err(Error::DimensionMismatch {
            op: "solve_min_inflation",
            left: format!("residual of length {}", r.len()),
            right: format!("{}x{} generator matrix", g.rows(), g.cols()),
        });
    }
    let flat = g.transpose();
    solve_min_inflation_flat(r, flat.data())
}

/// `‖r − Gβ‖∞` for generator-major `G`.
pub fn inf_residual(r: &[f64], generators: &[f64], beta: &[f64]) -> f64 {
    let n = r.len();
    let mut res = r.to_vec();
    for (g, b) in generators.chunks_exact(n).zip(beta) {
        if *b == 0.0 {
            continue;
        }
        for (ri, gi) in res.iter_mut().zip(g) {
            *ri -= b * gi;
        }
    }
    res.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// `m × ncols` constraint rows in canonical form, row-major.
    a: Vec<f64>,
    /// Reduced costs.
    d: Vec<f64>,
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
}

impl Tableau {
    fn new(r: &[f64], generators: &[f64], n: usize, k: usize) -> Self {
        let m = 2 * n;
        let t_col = k;
        let ncols = k + 1 + m;
        let mut a = vec![0.0; m * ncols];
        for (j, g) in generators.chunks_exact(n).enumerate() {
            for i in 0..n {
                a[i * ncols + j] = -g[i];
                a[(n + i) * ncols + j] = g[i];
            }
        }
        for row in 0..m {
            a[row * ncols + t_col] = -1.0;
            a[row * ncols + k + 1 + row] = 1.0;
        }

        let mut lower = vec![0.0; ncols];
        let mut upper = vec![f64::INFINITY; ncols];
        for j in 0..k {
            lower[j] = -1.0;
            upper[j] = 1.0;
        }

        let t0 = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut x = vec![0.0; ncols];
        x[t_col] = t0;
        for i in 0..n {
            x[k + 1 + i] = (t0 - r[i]).max(0.0);
            x[k + 1 + n + i] = (t0 + r[i]).max(0.0);
        }

        let mut d = vec![0.0; ncols];
        d[t_col] = 1.0;

        let basis: Vec<usize> = (0..m).map(|row| k + 1 + row).collect();
        let mut is_basic = vec![false; ncols];
        for &b in &basis {
            is_basic[b] = true;
        }
        Self {
            m,
            ncols,
            a,
            d,
            x,
            lower,
            upper,
            basis,
            is_basic,
        }
    }

    fn solve(&mut self) -> Result<usize> {
        let cap = 10_000 + 50 * (self.m + self.ncols);
        let mut bland = false;
        let mut streak = 0usize;
        for iter in 0..cap {
            let Some((enter, dir)) = self.price(bland) else {
                return Ok(iter);
            };
            let step = self.ratio_test(enter, dir)?;
            if step.theta <= 1e-14 {
                streak += 1;
                if streak >= DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            self.apply(enter, dir, step);
        }
        Err(Error::LpIterationLimit { cap })
    }

    /// Entering variable and direction (+1 increase, −1 decrease).
    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            if self.is_basic[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if dj < -PRICE_TOL && self.x[j] < self.upper[j] {
                1.0
            } else if dj > PRICE_TOL && self.x[j] > self.lower[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.map_or(true, |(_, _, mag)| dj.abs() > mag) {
                best = Some((j, dir, dj.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ratio_test(&self, enter: usize, dir: f64) -> Result<Step> {
        let own = if dir > 0.0 {
            self.upper[enter] - self.x[enter]
        } else {
            self.x[enter] - self.lower[enter]
        };
        let mut theta = own;
        let mut leave: Option<(usize, f64)> = None;
        for row in 0..self.m {
            let alpha = dir * self.a[row * self.ncols + enter];
            let b = self.basis[row];
            let limit = if alpha > PIVOT_TOL {
                // basic value moves down toward its lower bound
                (self.x[b] - self.lower[b]).max(0.0) / alpha
            } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                (self.upper[b] - self.x[b]).max(0.0) / -alpha
            } else {
                continue;
            };
            let bound = if alpha > 0.0 { self.lower[b] } else { self.upper[b] };
            let better = match leave {
                _ if limit < theta - 1e-15 => true,
                // Bland tie-break: smallest basic index among ties
                Some((lr, _)) if (limit - theta).abs() <= 1e-15 => b < self.basis[lr],
                _ => false,
            };
            if better {
                theta = limit;
                leave = Some((row, bound));
            }
        }
        if !theta.is_finite() {
            return Err(Error::LpUnbounded);
        }
        Ok(Step { theta, leave })
    }

    fn apply(&mut self, enter: usize, dir: f64, step: Step) {
        let delta = dir * step.theta;
        if delta != 0.0 {
            self.x[enter] += delta;
            for row in 0..self.m {
                let b = self.basis[row];
                self.x[b] -= delta * self.a[row * self.ncols + enter];
            }
        }
        match step.leave {
            None => {
                // bound flip: the entering variable stays nonbasic at its bound
                self.x[enter] = if dir > 0.0 {
                    self.upper[enter]
                } else {
                    self.lower[enter]
                };
            }
            Some((row, bound)) => {
                let leaving = self.basis[row];
                self.x[leaving] = bound;
                self.pivot(row, enter);
                self.is_basic[leaving] = false;
                self.is_basic[enter] = true;
                self.basis[row] = enter;
            }
        }
        for row in 0..self.m {
            let b = self.basis[row];
            self.x[b] = self.x[b].clamp(self.lower[b], self.upper[b]);
        }
    }

    fn pivot(&mut self, prow: usize, pcol: usize) {
        let nc = self.ncols;
        let piv = self.a[prow * nc + pcol];
        let (before, rest) = self.a.split_at_mut(prow * nc);
        let (pivot_row, after) = rest.split_at_mut(nc);
        for v in pivot_row.iter_mut() {
            *v /= piv;
        }
        pivot_row[pcol] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[pcol];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
                row[pcol] = 0.0;
            }
        };
        before.chunks_exact_mut(nc).for_each(eliminate);
        after.chunks_exact_mut(nc).for_each(eliminate);
        eliminate(&mut self.d);
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    theta: f64,
    /// Leaving row and the bound the leaving variable lands on.
    leave: Option<(usize, f64)>,
}
