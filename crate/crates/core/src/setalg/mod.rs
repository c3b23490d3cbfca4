//! Zonotope and matrix-zonotope algebra.
//!
//! Every operation is a pure function of immutable values. Exact operations
//! (linear map, Minkowski sum, Cartesian product, projection) commute with
//! membership; [`MatrixZonotope::mul_zonotope`] and [`Zonotope::reduce`] are
//! sound over-approximations.

mod interval;
mod matzono;
mod zonotope;

pub use interval::IntervalBox;
pub use matzono::MatrixZonotope;
pub use zonotope::{outline_2d, Zonotope, MEMBERSHIP_TOL};

/// `count` unit directions in `dim` dimensions, deterministic in `seed`.
///
/// The first `2·dim` directions are ±eᵢ; the rest are random on the sphere.
pub fn probe_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut out = Vec::with_capacity(count);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            if out.len() < count {
                let mut e = vec![0.0; dim];
                e[i] = s;
                out.push(e);
            }
        }
    }
    let mut rng = crate::seeds::rng(seed);
    while out.len() < count {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = crate::linsolve::norm2(&v);
        if n > 1e-3 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}
