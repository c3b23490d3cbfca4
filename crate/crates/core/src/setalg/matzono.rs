use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Zonotope;
use crate::error::{shape, Error, Result};
use crate::linsolve::{solve_min_inflation_flat, DenseMatrix};

/// `{ C + Σ αᵢ Gᵢ : αᵢ ∈ [−1, 1] }` over `n × p` matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixZonotopeRepr", into = "MatrixZonotopeRepr")]
pub struct MatrixZonotope {
    center: DenseMatrix,
    generators: Vec<DenseMatrix>,
}

#[derive(Serialize, Deserialize)]
struct MatrixZonotopeRepr {
    center: DenseMatrix,
    generators: Vec<DenseMatrix>,
}

impl TryFrom<MatrixZonotopeRepr> for MatrixZonotope {
    type Error = Error;

    fn try_from(r: MatrixZonotopeRepr) -> Result<Self> {
        MatrixZonotope::new(r.center, r.generators)
    }
}

impl From<MatrixZonotope> for MatrixZonotopeRepr {
    fn from(m: MatrixZonotope) -> Self {
        MatrixZonotopeRepr {
            center: m.center,
            generators: m.generators,
        }
    }
}

impl MatrixZonotope {
    pub fn new(center: DenseMatrix, generators: Vec<DenseMatrix>) -> Result<Self> {
        if let Some(bad) = generators.iter().find(|g| g.shape() != center.shape()) {
            return Err(Error::DimensionMismatch {
                op: "MatrixZonotope::new",
                left: shape(center.rows(), center.cols()),
                right: shape(bad.rows(), bad.cols()),
            });
        }
        Ok(Self { center, generators })
    }

    pub fn center(&self) -> &DenseMatrix {
        &self.center
    }

    pub fn generators(&self) -> &[DenseMatrix] {
        &self.generators
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.center.shape()
    }

    /// `C + Σ αᵢ Gᵢ`.
    pub fn member(&self, alpha: &[f64]) -> Result<DenseMatrix> {
        if alpha.len() != self.generators.len() {
            return Err(Error::DimensionMismatch {
                op: "MatrixZonotope::member",
                left: format!("{} generators", self.generators.len()),
                right: format!("{} coefficients", alpha.len()),
            });
        }
        let mut x = self.center.clone();
        for (g, a) in self.generators.iter().zip(alpha) {
            for (xi, gi) in x.data_mut().iter_mut().zip(g.data()) {
                *xi += a * gi;
            }
        }
        Ok(x)
    }

    pub fn sample_member<R: Rng + ?Sized>(&self, rng: &mut R) -> DenseMatrix {
        let alpha: Vec<f64> = (0..self.generators.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        self.member(&alpha).expect("coefficient count matches")
    }

    /// Sound enclosure of `{ X z : X ∈ self, z ∈ zono }`.
    ///
    /// Center `C c`; generators `C gⱼ`, then `Gᵢ c`, then `Gᵢ gⱼ` for all
    /// `(i, j)` with `i` major. Generator count is `(γ_M + 1)(γ_Z + 1) − 1`.
    pub fn mul_zonotope(&self, zono: &Zonotope) -> Result<Zonotope> {
        let (n, p) = self.shape();
        if p != zono.dim() {
            return Err(Error::DimensionMismatch {
                op: "matzono_mul",
                left: shape(n, p),
                right: format!("zonotope of dimension {}", zono.dim()),
            });
        }
        let gz = zono.num_generators();
        let gm = self.generators.len();
        let mut gens = Vec::with_capacity(n * ((gm + 1) * (gz + 1) - 1));
        let center = self.center.mul_vec_unchecked(zono.center());
        for g in zono.generators() {
            gens.extend(self.center.mul_vec_unchecked(g));
        }
        for gi in &self.generators {
            gens.extend(gi.mul_vec_unchecked(zono.center()));
        }
        for gi in &self.generators {
            for g in zono.generators() {
                gens.extend(gi.mul_vec_unchecked(g));
            }
        }
        Zonotope::from_flat(center, gens)
    }

    /// Every entry multiplied by `s`.
    pub fn scale(&self, s: f64) -> MatrixZonotope {
        MatrixZonotope {
            center: self.center.scale(s),
            generators: self.generators.iter().map(|g| g.scale(s)).collect(),
        }
    }

    /// Minimal ℓ∞ inflation making `x` a member, computed on vectorized matrices.
    pub fn inflation_score(&self, x: &DenseMatrix) -> Result<f64> {
        if x.shape() != self.shape() {
            return Err(Error::DimensionMismatch {
                op: "MatrixZonotope::inflation_score",
                left: shape(self.center.rows(), self.center.cols()),
                right: shape(x.rows(), x.cols()),
            });
        }
        let r: Vec<f64> = x.data().iter().zip(self.center.data()).map(|(a, b)| a - b).collect();
        let flat: Vec<f64> = self.generators.iter().flat_map(|g| g.data().iter().copied()).collect();
        Ok(solve_min_inflation_flat(&r, &flat)?.t)
    }
}
