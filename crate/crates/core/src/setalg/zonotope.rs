use rand::Rng;
use serde::{Deserialize, Serialize};

use super::IntervalBox;
use crate::error::{shape, Error, Result};
use crate::linsolve::{dot, solve_min_inflation_flat, DenseMatrix};

/// Default membership tolerance on the LP inflation score.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// `⟨c, G⟩ = { c + Σ αⱼ gⱼ : αⱼ ∈ [−1, 1] }`.
///
/// Generators are stored contiguously (generator-major), so generator `j`
/// is `generators[j*n .. (j+1)*n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZonotopeRepr", into = "ZonotopeRepr")]
pub struct Zonotope {
    center: Vec<f64>,
    generators: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ZonotopeRepr {
    center: Vec<f64>,
    generators: Vec<Vec<f64>>,
}

impl TryFrom<ZonotopeRepr> for Zonotope {
    type Error = Error;

    fn try_from(r: ZonotopeRepr) -> Result<Self> {
        Zonotope::new(r.center, &r.generators)
    }
}

impl From<Zonotope> for ZonotopeRepr {
    fn from(z: Zonotope) -> Self {
        ZonotopeRepr {
            generators: z.generators().map(<[f64]>::to_vec).collect(),
            center: z.center,
        }
    }
}

impl Zonotope {
    pub fn new(center: Vec<f64>, generators: &[Vec<f64>]) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(Error::InvalidArgument("zonotope of dimension 0".into()));
        }
        if let Some(bad) = generators.iter().find(|g| g.len() != n) {
            return Err(Error::DimensionMismatch {
                op: "Zonotope::new",
                left: format!("center of dimension {n}"),
                right: format!("generator of dimension {}", bad.len()),
            });
        }
        Ok(Self {
            center,
            generators: generators.concat(),
        })
    }

    /// Builds from a flat generator-major buffer.
    pub fn from_flat(center: Vec<f64>, generators: Vec<f64>) -> Result<Self> {
        let n = center.len();
        if n == 0 || generators.len() % n != 0 {
            return Err(Error::DimensionMismatch {
                op: "Zonotope::from_flat",
                left: format!("center of dimension {n}"),
                right: format!("{} generator entries", generators.len()),
            });
        }
        Ok(Self { center, generators })
    }

    /// Builds from an `n × γ` generator matrix (columns are generators).
    pub fn from_matrix(center: Vec<f64>, g: &DenseMatrix) -> Result<Self> {
        if g.rows() != center.len() {
            return Err(Error::DimensionMismatch {
                op: "Zonotope::from_matrix",
                left: format!("center of dimension {}", center.len()),
                right: shape(g.rows(), g.cols()),
            });
        }
        Self::from_flat(center, g.transpose().data().to_vec())
    }

    pub fn point(center: Vec<f64>) -> Result<Self> {
        Self::from_flat(center, Vec::new())
    }

    /// Axis-aligned box `center ± radius`, one generator per coordinate.
    pub fn from_box(center: Vec<f64>, radius: &[f64]) -> Result<Self> {
        let n = center.len();
        if radius.len() != n {
            return Err(Error::DimensionMismatch {
                op: "Zonotope::from_box",
                left: format!("center of dimension {n}"),
                right: format!("radius of dimension {}", radius.len()),
            });
        }
        let mut gens = vec![0.0; n * n];
        for (i, r) in radius.iter().enumerate() {
            gens[i * n + i] = *r;
        }
        Self::from_flat(center, gens)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    #[inline]
    pub fn num_generators(&self) -> usize {
        self.generators.len() / self.dim()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn generator(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.generators[j * n..(j + 1) * n]
    }

    pub fn generators(&self) -> std::slice::ChunksExact<'_, f64> {
        self.generators.chunks_exact(self.dim())
    }

    pub fn generators_flat(&self) -> &[f64] {
        &self.generators
    }

    /// `n × γ` generator matrix.
    pub fn generator_matrix(&self) -> DenseMatrix {
        let n = self.dim();
        let g = self.num_generators();
        let mut m = DenseMatrix::zeros(n, g);
        for (j, col) in self.generators().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.center.iter().chain(&self.generators).all(|v| v.is_finite())
    }

    /// Image under `L`; exact.
    pub fn linear_map(&self, l: &DenseMatrix) -> Result<Zonotope> {
        if l.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                op: "linear_map",
                left: shape(l.rows(), l.cols()),
                right: format!("zonotope of dimension {}", self.dim()),
            });
        }
        let center = l.mul_vec_unchecked(&self.center);
        let mut gens = Vec::with_capacity(l.rows() * self.num_generators());
        for g in self.generators() {
            gens.extend(l.mul_vec_unchecked(g));
        }
        Zonotope::from_flat(center, gens)
    }

    pub fn translate(&self, offset: &[f64]) -> Result<Zonotope> {
        self.check_dim("translate", offset.len())?;
        let center = self.center.iter().zip(offset).map(|(c, o)| c + o).collect();
        Zonotope::from_flat(center, self.generators.clone())
    }

    pub fn scale(&self, s: f64) -> Zonotope {
        Zonotope {
            center: self.center.iter().map(|v| v * s).collect(),
            generators: self.generators.iter().map(|v| v * s).collect(),
        }
    }

    /// `Z₁ ⊕ Z₂ = ⟨c₁ + c₂, [G₁ | G₂]⟩`; exact.
    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Zonotope> {
        self.check_dim("minkowski_sum", other.dim())?;
        let center = self.center.iter().zip(&other.center).map(|(a, b)| a + b).collect();
        let mut gens = Vec::with_capacity(self.generators.len() + other.generators.len());
        gens.extend_from_slice(&self.generators);
        gens.extend_from_slice(&other.generators);
        Zonotope::from_flat(center, gens)
    }

    /// `Z₁ × Z₂` with block-diagonal generators.
    pub fn cartesian_product(&self, other: &Zonotope) -> Zonotope {
        let (n1, n2) = (self.dim(), other.dim());
        let n = n1 + n2;
        let mut center = self.center.clone();
        center.extend_from_slice(&other.center);
        let mut gens = Vec::with_capacity(n * (self.num_generators() + other.num_generators()));
        for g in self.generators() {
            gens.extend_from_slice(g);
            gens.extend(std::iter::repeat(0.0).take(n2));
        }
        for g in other.generators() {
            gens.extend(std::iter::repeat(0.0).take(n1));
            gens.extend_from_slice(g);
        }
        Zonotope {
            center,
            generators: gens,
        }
    }

    /// Cartesian product of a nonempty list, left to right.
    pub fn product_of(parts: &[Zonotope]) -> Result<Zonotope> {
        let (first, rest) = parts
            .split_first()
            .ok_or(Error::EmptyInput("cartesian product of no sets"))?;
        Ok(rest.iter().fold(first.clone(), |acc, z| acc.cartesian_product(z)))
    }

    /// Row selection onto `dims`; exact.
    pub fn project(&self, dims: &[usize]) -> Result<Zonotope> {
        if dims.is_empty() {
            return Err(Error::EmptyInput("projection onto no coordinates"));
        }
        let n = self.dim();
        if let Some(&bad) = dims.iter().find(|&&d| d >= n) {
            return Err(Error::IndexOutOfRange {
                op: "project",
                index: bad,
                dim: n,
            });
        }
        let center = dims.iter().map(|&d| self.center[d]).collect();
        let mut gens = Vec::with_capacity(dims.len() * self.num_generators());
        for g in self.generators() {
            gens.extend(dims.iter().map(|&d| g[d]));
        }
        Zonotope::from_flat(center, gens)
    }

    /// Projection onto the leading `k` coordinates.
    pub fn project_prefix(&self, k: usize) -> Result<Zonotope> {
        self.project(&(0..k).collect::<Vec<_>>())
    }

    /// Exact support value `dᵀc + Σ |dᵀgⱼ|`.
    pub fn support(&self, direction: &[f64]) -> Result<f64> {
        self.check_dim("support", direction.len())?;
        if direction.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroDirection);
        }
        Ok(dot(direction, &self.center) + self.generators().map(|g| dot(direction, g).abs()).sum::<f64>())
    }

    /// Per-coordinate radius `rᵢ = Σⱼ |Gᵢⱼ|`.
    pub fn radius(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.dim()];
        for g in self.generators() {
            for (ri, gi) in r.iter_mut().zip(g) {
                *ri += gi.abs();
            }
        }
        r
    }

    pub fn interval_hull(&self) -> IntervalBox {
        let r = self.radius();
        IntervalBox::new_unchecked(
            self.center.iter().zip(&r).map(|(c, r)| c - r).collect(),
            self.center.iter().zip(&r).map(|(c, r)| c + r).collect(),
        )
    }

    /// Box-merging order reduction: keep the `order·n − n` generators with the
    /// largest ℓ₁ norm (stable sort) and enclose the rest in an axis-aligned box.
    pub fn reduce(&self, order: usize) -> Result<Zonotope> {
        if order == 0 {
            return Err(Error::InvalidArgument("reduction order must be >= 1".into()));
        }
        let n = self.dim();
        let gamma = self.num_generators();
        let budget = order * n;
        if gamma <= budget {
            return Ok(self.clone());
        }
        let norms: Vec<f64> = self.generators().map(|g| g.iter().map(|v| v.abs()).sum()).collect();
        let mut idx: Vec<usize> = (0..gamma).collect();
        idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
        let keep = budget - n;
        let mut gens = Vec::with_capacity(budget * n);
        for &j in &idx[..keep] {
            gens.extend_from_slice(self.generator(j));
        }
        let mut boxr = vec![0.0; n];
        for &j in &idx[keep..] {
            for (b, g) in boxr.iter_mut().zip(self.generator(j)) {
                *b += g.abs();
            }
        }
        for (i, r) in boxr.iter().enumerate() {
            gens.extend((0..n).map(|k| if k == i { *r } else { 0.0 }));
        }
        Zonotope::from_flat(self.center.clone(), gens)
    }

    /// Appends zero generators until there are exactly `count`.
    pub fn pad_generators(&self, count: usize) -> Result<Zonotope> {
        let gamma = self.num_generators();
        if gamma > count {
            return Err(Error::TooManyGenerators {
                found: gamma,
                max: count,
            });
        }
        let mut gens = self.generators.clone();
        gens.resize(count * self.dim(), 0.0);
        Zonotope::from_flat(self.center.clone(), gens)
    }

    pub fn drop_zero_generators(&self) -> Zonotope {
        let gens = self
            .generators()
            .filter(|g| g.iter().any(|v| *v != 0.0))
            .flatten()
            .copied()
            .collect();
        Zonotope {
            center: self.center.clone(),
            generators: gens,
        }
    }

    /// `c + Gα` with `α ~ U[−1, 1]^γ`.
    pub fn sample_member<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = self.center.clone();
        for g in self.generators() {
            let a: f64 = rng.gen_range(-1.0..=1.0);
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi += a * gi;
            }
        }
        x
    }

    /// Minimal ℓ∞ inflation radius making `y` a member (0 for members).
    pub fn inflation_score(&self, y: &[f64]) -> Result<f64> {
        self.check_dim("inflation_score", y.len())?;
        let r: Vec<f64> = y.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        Ok(solve_min_inflation_flat(&r, &self.generators)?.t)
    }

    pub fn contains_point(&self, y: &[f64], tol: f64) -> Result<bool> {
        Ok(self.inflation_score(y)? <= tol)
    }

    /// Over-approximate containment test `other ⊆ self`, checked by support
    /// dominance along `directions`.
    pub fn dominates_along(&self, other: &Zonotope, directions: &[Vec<f64>], tol: f64) -> Result<bool> {
        for d in directions {
            if other.support(d)? > self.support(d)? + tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Mean interval-hull width over coordinates.
    pub fn mean_hull_width(&self) -> f64 {
        self.interval_hull().mean_width()
    }

    fn check_dim(&self, op: &'static str, other: usize) -> Result<()> {
        if self.dim() != other {
            return Err(Error::DimensionMismatch {
                op,
                left: format!("dimension {}", self.dim()),
                right: format!("dimension {other}"),
            });
        }
        Ok(())
    }
}

/// Outline of a 2-D zonotope via support points in `count` evenly spaced
/// directions.
pub fn outline_2d(z: &Zonotope, count: usize) -> Result<Vec<[f64; 2]>> {
    if z.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "outline needs a 2-D zonotope, got dimension {}",
            z.dim()
        )));
    }
    let mut pts = Vec::with_capacity(count);
    for k in 0..count {
        let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
        let d = [th.cos(), th.sin()];
        let mut p = [z.center[0], z.center[1]];
        for g in z.generators() {
            let s = (d[0] * g[0] + d[1] * g[1]).signum();
            p[0] += s * g[0];
            p[1] += s * g[1];
        }
        pts.push(p);
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn z(c: &[f64], gens: &[&[f64]]) -> Zonotope {
        Zonotope::new(c.to_vec(), &gens.iter().map(|g| g.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// All 2^γ vertices candidates c ± g₁ ± … ± g_γ.
    fn sign_images(z: &Zonotope) -> Vec<Vec<f64>> {
        let g = z.num_generators();
        (0..1u32 << g)
            .map(|mask| {
                let mut p = z.center().to_vec();
                for (j, gen) in z.generators().enumerate() {
                    let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                    for (pi, gi) in p.iter_mut().zip(gen) {
                        *pi += s * gi;
                    }
                }
                p
            })
            .collect()
    }

    #[test]
    fn identity_map_is_noop() {
        let a = z(&[1.0, 1.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(a.linear_map(&DenseMatrix::identity(2)).unwrap(), a);
    }

    #[test]
    fn zero_map_gives_origin_with_zero_generators() {
        let a = z(&[1.0, -2.0], &[&[1.0, 3.0], &[0.5, 1.0]]);
        let out = a.linear_map(&DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(out.center(), &[0.0, 0.0]);
        assert_eq!(out.num_generators(), 2);
        assert!(out.generators_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diagonal_map_matches_vertex_enumeration() {
        let a = z(&[1.0, 1.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let l = DenseMatrix::diag(&[2.0, 3.0]);
        let out = a.linear_map(&l).unwrap();
        assert_eq!(out, z(&[2.0, 3.0], &[&[2.0, 0.0], &[0.0, 3.0]]));
        let mut lhs: Vec<Vec<f64>> = sign_images(&a).iter().map(|p| l.mul_vec(p).unwrap()).collect();
        let mut rhs = sign_images(&out);
        let key = |p: &Vec<f64>| (p[0].to_bits(), p[1].to_bits());
        lhs.sort_by_key(key);
        rhs.sort_by_key(key);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn linear_map_shape_error() {
        let a = z(&[0.0, 0.0], &[]);
        let err = a.linear_map(&DenseMatrix::zeros(3, 3)).unwrap_err();
        assert!(err.to_string().contains("3x3"));
    }

    #[test]
    fn minkowski_identity_and_interval() {
        let a = z(&[1.0, 2.0], &[&[1.0, 0.5]]);
        let zero = Zonotope::point(vec![0.0, 0.0]).unwrap();
        assert_eq!(a.minkowski_sum(&zero).unwrap(), a);

        let s = z(&[1.0], &[&[2.0]]).minkowski_sum(&z(&[-1.0], &[&[3.0]])).unwrap();
        assert_eq!(s, z(&[0.0], &[&[2.0], &[3.0]]));
        let h = s.interval_hull();
        assert_eq!((h.lower()[0], h.upper()[0]), (-5.0, 5.0));
    }

    #[test]
    fn minkowski_unit_square_grid_membership() {
        let s = z(&[0.0, 0.0], &[&[1.0, 0.0]])
            .minkowski_sum(&z(&[0.0, 0.0], &[&[0.0, 1.0]]))
            .unwrap();
        for i in -12..=12 {
            for j in -12..=12 {
                let p = [i as f64 / 10.0, j as f64 / 10.0];
                let inside = p[0].abs() <= 1.0 && p[1].abs() <= 1.0;
                assert_eq!(s.contains_point(&p, MEMBERSHIP_TOL).unwrap(), inside, "{p:?}");
            }
        }
    }

    #[test]
    fn cartesian_product_layout() {
        let p = Zonotope::point(vec![1.0]).unwrap();
        let q = Zonotope::point(vec![2.0, 3.0]).unwrap();
        let pq = p.cartesian_product(&q);
        assert_eq!(pq.center(), &[1.0, 2.0, 3.0]);
        assert_eq!(pq.num_generators(), 0);

        let a = z(&[1.0], &[&[1.0]]);
        let b = z(&[2.0], &[&[3.0]]);
        assert_eq!(a.cartesian_product(&b), z(&[1.0, 2.0], &[&[1.0, 0.0], &[0.0, 3.0]]));
    }

    #[test]
    fn project_cases() {
        let a = z(&[1.0, 2.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(a.project(&[0, 1]).unwrap(), a);
        assert_eq!(a.project(&[0]).unwrap(), z(&[1.0], &[&[1.0], &[0.0]]));
        assert!(matches!(
            a.project(&[2]),
            Err(Error::IndexOutOfRange { index: 2, dim: 2, .. })
        ));
    }

    #[test]
    fn support_and_hull() {
        let a = z(&[0.0, 0.0], &[&[1.0, 0.0], &[2.0, 1.0]]);
        assert_eq!(a.support(&[1.0, 0.0]).unwrap(), 3.0);
        let h = a.interval_hull();
        assert_eq!(h.lower(), &[-3.0, -1.0]);
        assert_eq!(h.upper(), &[3.0, 1.0]);
        let p = Zonotope::point(vec![1.0, 2.0]).unwrap();
        assert_eq!(p.support(&[0.5, -1.0]).unwrap(), 0.5 - 2.0);
        let hp = p.interval_hull();
        assert_eq!(hp.lower(), hp.upper());
        assert!(matches!(a.support(&[0.0, 0.0]), Err(Error::ZeroDirection)));
    }

    #[test]
    fn support_dominates_dense_samples() {
        let a = z(&[0.3, -0.2], &[&[1.0, 0.2], &[-0.4, 0.7], &[0.1, -0.3]]);
        let mut rng = seeds::rng(1);
        let d = [0.6, 0.8];
        let s = a.support(&d).unwrap();
        let mut best = f64::NEG_INFINITY;
        for i in 0..100_000 {
            let x = if i % 2 == 0 {
                a.sample_member(&mut rng)
            } else {
                let alpha: Vec<f64> = (0..3).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
                let mut x = a.center().to_vec();
                for (g, al) in a.generators().zip(&alpha) {
                    for (xi, gi) in x.iter_mut().zip(g) {
                        *xi += al * gi;
                    }
                }
                x
            };
            best = best.max(dot(&d, &x));
        }
        assert!(best <= s + 1e-9);
        assert!(s - best < 1e-12, "gap {}", s - best);
    }

    #[test]
    fn hull_contains_samples() {
        let a = z(&[1.0, 0.0, -1.0], &[&[1.0, 2.0, 0.0], &[0.0, -1.0, 0.5]]);
        let h = a.interval_hull();
        let mut rng = seeds::rng(2);
        for _ in 0..10_000 {
            assert!(h.contains(&a.sample_member(&mut rng), 1e-12));
        }
    }

    #[test]
    fn reduce_noop_when_small() {
        let a = z(&[0.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(a.reduce(1).unwrap(), a);
    }

    #[test]
    fn reduce_to_order_one_is_interval_hull_box() {
        let mut rng = seeds::rng(3);
        let gens: Vec<Vec<f64>> = (0..10)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let a = Zonotope::new(vec![0.5, -0.5], &gens).unwrap();
        let r = a.reduce(1).unwrap();
        assert_eq!(r.num_generators(), 2);
        assert_eq!(r.interval_hull(), a.interval_hull());
        assert_eq!(r.generator(0)[1], 0.0);
        assert_eq!(r.generator(1)[0], 0.0);
    }

    #[test]
    fn reduce_is_stable_on_ties() {
        let a = z(&[0.0], &[&[1.0], &[-1.0], &[1.0], &[0.5]]);
        let r = a.reduce(3).unwrap();
        // keep 2 of the tied largest, in original order, then the box
        assert_eq!(r.generators_flat(), &[1.0, -1.0, 1.5]);
    }

    #[test]
    fn pad_and_drop() {
        let a = z(&[0.0, 0.0], &[&[1.0, 0.0]]);
        let p = a.pad_generators(3).unwrap();
        assert_eq!(p.num_generators(), 3);
        assert_eq!(p.drop_zero_generators(), a);
        assert!(matches!(
            p.pad_generators(2),
            Err(Error::TooManyGenerators { found: 3, max: 2 })
        ));
    }

    #[test]
    fn json_schema() {
        let a = z(&[1.0, 2.0], &[&[0.5, 0.0]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"center":[1.0,2.0],"generators":[[0.5,0.0]]}"#);
        let back: Zonotope = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Zonotope>(r#"{"center":[1.0],"generators":[[1.0,2.0]]}"#).is_err());
    }

    #[test]
    fn sample_mean_near_center() {
        let a = z(&[2.0, -1.0], &[&[1.0, 0.5], &[0.3, -0.8]]);
        let mut rng = seeds::rng(4);
        let n = 100_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let x = a.sample_member(&mut rng);
            mean[0] += x[0] / n as f64;
            mean[1] += x[1] / n as f64;
        }
        let rad = a.radius();
        let rnorm = (rad[0] * rad[0] + rad[1] * rad[1]).sqrt();
        assert!(((mean[0] - 2.0).powi(2) + (mean[1] + 1.0).powi(2)).sqrt() < 0.01 * rnorm);
    }

    #[test]
    fn point_samples_are_center() {
        let p = Zonotope::point(vec![3.0, 4.0]).unwrap();
        let mut rng = seeds::rng(5);
        assert_eq!(p.sample_member(&mut rng), vec![3.0, 4.0]);
    }
}
