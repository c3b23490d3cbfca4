//! Data-driven output reachability: lifted data matrices, the noise matrix
//! zonotope, the model set and step-wise propagation.
//!
//! The lifted vector at step `k` stacks past outputs, newest first, then past
//! inputs in the same order:
//! `z_k = (y_{k−1}, …, y_{k−n_o}, u_{k−1}, …, u_{k−n_o})`.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::linsolve::{pinv_from_svd, svd, DenseMatrix};
use crate::setalg::{MatrixZonotope, Zonotope};
use crate::sysim::Trajectory;

/// Data matrices `Z₊` (`p × T`) and `Φ₋` (`(p + n_u) × T`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedRecord {
    pub z_plus: DenseMatrix,
    pub phi_minus: DenseMatrix,
    pub n_o: usize,
    pub n_y: usize,
    pub n_u: usize,
    /// Indices of input trajectories too short to contribute a column.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<usize>,
}

impl LiftedRecord {
    pub fn p(&self) -> usize {
        self.n_o * (self.n_y + self.n_u)
    }

    pub fn t(&self) -> usize {
        self.z_plus.cols()
    }
}

/// Lifted vector `z_k` of a trajectory; requires `n_o ≤ k ≤ len`.
pub fn lifted_vector(traj: &Trajectory, n_o: usize, k: usize) -> Vec<f64> {
    let mut z = Vec::new();
    for i in 1..=n_o {
        z.extend_from_slice(&traj.outputs[k - i]);
    }
    for i in 1..=n_o {
        z.extend_from_slice(&traj.inputs[k - i]);
    }
    z
}

/// Columns for `k = n_o, …, len − 2` of every trajectory, concatenated in
/// input order. Trajectories shorter than `n_o + 2` are skipped and listed in
/// [`LiftedRecord::skipped`].
pub fn build_lifted(trajs: &[Trajectory], n_o: usize) -> Result<LiftedRecord> {
    if n_o == 0 {
        return Err(Error::InvalidArgument("lag order n_o must be at least 1".into()));
    }
    let first = trajs.first().ok_or(Error::EmptyInput("no trajectories"))?;
    let n_y = first.outputs.first().map_or(0, Vec::len);
    let n_u = first.inputs.first().map_or(0, Vec::len);
    let mut zp_cols = Vec::new();
    let mut phi_cols = Vec::new();
    let mut skipped = Vec::new();
    for (idx, t) in trajs.iter().enumerate() {
        t.validate()?;
        if t.len() < n_o + 2 {
            skipped.push(idx);
            continue;
        }
        if t.outputs.iter().any(|y| y.len() != n_y) || t.inputs.iter().any(|u| u.len() != n_u) {
            return Err(Error::DimensionMismatch {
                op: "build_lifted",
                left: format!("n_y {n_y}, n_u {n_u}"),
                right: format!("trajectory {idx}"),
            });
        }
        for k in n_o..=t.len() - 2 {
            let mut phi = lifted_vector(t, n_o, k);
            phi.extend_from_slice(&t.inputs[k]);
            phi_cols.push(phi);
            zp_cols.push(lifted_vector(t, n_o, k + 1));
        }
    }
    if zp_cols.is_empty() {
        return Err(Error::EmptyInput("no trajectory is long enough for the lag order"));
    }
    Ok(LiftedRecord {
        z_plus: DenseMatrix::from_columns(&zp_cols)?,
        phi_minus: DenseMatrix::from_columns(&phi_cols)?,
        n_o,
        n_y,
        n_u,
        skipped,
    })
}

/// Where residual generators enter the `p`-row noise matrices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseEmbedding {
    /// First `n_y` rows only; the remaining rows are exact shifts.
    #[default]
    OutputBlock,
    /// Every output-lag block gets its own copy of each generator.
    AllOutputBlocks,
}

/// `M_ε`: center tiled across `T` columns, one generator per
/// (residual generator, column) pair.
pub fn build_noise_matzono(eps: &Zonotope, t: usize, p: usize, embedding: NoiseEmbedding) -> Result<MatrixZonotope> {
    let ny = eps.dim();
    if t == 0 {
        return Err(Error::InvalidArgument("noise matrix zonotope needs T ≥ 1".into()));
    }
    if ny > p {
        return Err(Error::DimensionMismatch {
            op: "build_noise_matzono",
            left: format!("residual dimension {ny}"),
            right: format!("lifted dimension {p}"),
        });
    }
    let mut center = DenseMatrix::zeros(p, t);
    for j in 0..t {
        for (d, c) in eps.center().iter().enumerate() {
            center[(d, j)] = *c;
        }
    }
    let blocks: Vec<usize> = match embedding {
        NoiseEmbedding::OutputBlock => vec![0],
        NoiseEmbedding::AllOutputBlocks => (0..p / ny).map(|b| b * ny).collect(),
    };
    let mut gens = Vec::with_capacity(eps.num_generators() * t * blocks.len());
    for &row0 in &blocks {
        for g in eps.generators() {
            for j in 0..t {
                let mut m = DenseMatrix::zeros(p, t);
                for (d, v) in g.iter().enumerate() {
                    m[(row0 + d, j)] = *v;
                }
                gens.push(m);
            }
        }
    }
    MatrixZonotope::new(center, gens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub t: usize,
    pub n_o: usize,
    pub n_y: usize,
    pub n_u: usize,
    pub rank: usize,
    pub rank_tol: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

/// `M_Σ`, a matrix zonotope of shape `p × (p + n_u)` containing every
/// parameter matrix consistent with the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    #[serde(flatten)]
    pub msigma: MatrixZonotope,
    pub meta: ModelMeta,
}

impl ModelSet {
    /// A single known parameter matrix.
    pub fn exact(theta: DenseMatrix, n_o: usize, n_y: usize, n_u: usize) -> Result<Self> {
        let p = n_o * (n_y + n_u);
        if theta.shape() != (p, p + n_u) {
            return Err(Error::DimensionMismatch {
                op: "ModelSet::exact",
                left: shape(p, p + n_u),
                right: shape(theta.rows(), theta.cols()),
            });
        }
        Ok(ModelSet {
            msigma: MatrixZonotope::new(theta, vec![])?,
            meta: ModelMeta {
                t: 0,
                n_o,
                n_y,
                n_u,
                rank: p + n_u,
                rank_tol: 0.0,
                sigma_max: 0.0,
                sigma_min: 0.0,
            },
        })
    }

    pub fn p(&self) -> usize {
        self.meta.n_o * (self.meta.n_y + self.meta.n_u)
    }
}

/// `M_Σ = (Z₊ − M_ε) Φ₋†` after checking that `Φ₋` has full row rank.
pub fn build_model_set(lr: &LiftedRecord, meps: &MatrixZonotope, rank_tol: f64) -> Result<ModelSet> {
    if meps.shape() != lr.z_plus.shape() {
        return Err(Error::DimensionMismatch {
            op: "build_model_set",
            left: format!("Z+ {}", shape(lr.z_plus.rows(), lr.z_plus.cols())),
            right: format!("M_eps {}", shape(meps.shape().0, meps.shape().1)),
        });
    }
    let required = lr.phi_minus.rows();
    let f = svd(&lr.phi_minus)?;
    let rank = f.rank(rank_tol);
    if rank < required {
        return Err(Error::RankDeficient {
            observed: rank,
            required,
        });
    }
    let pinv = pinv_from_svd(&f, rank_tol);
    let center = lr.z_plus.sub(meps.center())?.matmul(&pinv)?;
    let generators = meps
        .generators()
        .iter()
        .map(|g| g.matmul(&pinv).map(|m| m.scale(-1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelSet {
        msigma: MatrixZonotope::new(center, generators)?,
        meta: ModelMeta {
            t: lr.t(),
            n_o: lr.n_o,
            n_y: lr.n_y,
            n_u: lr.n_u,
            rank,
            rank_tol,
            sigma_max: f.singular_values.first().copied().unwrap_or(0.0),
            sigma_min: f.singular_values.last().copied().unwrap_or(0.0),
        },
    })
}

/// Embeds `eps` into the first rows of a `p`-dimensional zero set.
fn embed_residual(eps: &Zonotope, p: usize) -> Result<Zonotope> {
    let ny = eps.dim();
    let mut l = DenseMatrix::zeros(p, ny);
    l.set_block(0, 0, &DenseMatrix::identity(ny));
    eps.linear_map(&l)
}

/// `Ẑ_{k+1} = M_Σ (Ẑ_k × U_k) ⊕ Z_ε`, without reduction.
pub fn propagate_step(ms: &ModelSet, zk: &Zonotope, uk: &Zonotope, eps: &Zonotope) -> Result<Zonotope> {
    let p = ms.p();
    if zk.dim() != p || uk.dim() != ms.meta.n_u || eps.dim() != ms.meta.n_y {
        return Err(Error::DimensionMismatch {
            op: "propagate_step",
            left: format!("p {p}, n_u {}, n_y {}", ms.meta.n_u, ms.meta.n_y),
            right: format!("Z {}, U {}, eps {}", zk.dim(), uk.dim(), eps.dim()),
        });
    }
    ms.msigma
        .mul_zonotope(&zk.cartesian_product(uk))?
        .minkowski_sum(&embed_residual(eps, p)?)
}

/// `Ẑ_{n_o} = Ŷ_{n_o−1} × ⋯ × Ŷ_0 × U_{n_o−1} × ⋯ × U_0`; both slices are
/// given in time order (index 0 first).
pub fn initial_lifted_set(y_sets: &[Zonotope], u_sets: &[Zonotope]) -> Result<Zonotope> {
    if y_sets.is_empty() || y_sets.len() != u_sets.len() {
        return Err(Error::InvalidArgument(format!(
            "need n_o output sets and n_o input sets, got {} and {}",
            y_sets.len(),
            u_sets.len()
        )));
    }
    let parts: Vec<Zonotope> = y_sets.iter().rev().chain(u_sets.iter().rev()).cloned().collect();
    Zonotope::product_of(&parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSet {
    pub step: usize,
    #[serde(flatten)]
    pub set: Zonotope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachResult {
    pub n_o: usize,
    pub horizon: usize,
    pub rho_max: usize,
    /// `Ẑ_{n_o}, …, Ẑ_{N+1}`.
    pub lifted_sets: Vec<StepSet>,
    /// `Ŷ_{n_o}, …, Ŷ_N`.
    pub output_sets: Vec<StepSet>,
}

impl ReachResult {
    pub fn output_at(&self, step: usize) -> Option<&Zonotope> {
        self.output_sets.iter().find(|s| s.step == step).map(|s| &s.set)
    }
}

/// Runs the propagation from `Ẑ_{n_o}` up to `Ŷ_N`, reducing each lifted set
/// to order `rho_max`. `u_sets` holds `U_{n_o}, …, U_N`, or a single set used
/// at every step.
pub fn run_reachability(
    ms: &ModelSet,
    z_init: &Zonotope,
    u_sets: &[Zonotope],
    eps: &Zonotope,
    horizon: usize,
    rho_max: usize,
) -> Result<ReachResult> {
    let n_o = ms.meta.n_o;
    let p = ms.p();
    if z_init.dim() != p {
        return Err(Error::DimensionMismatch {
            op: "run_reachability",
            left: format!("lifted dimension {p}"),
            right: format!("initial set of dimension {}", z_init.dim()),
        });
    }
    if horizon < n_o {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is below n_o = {n_o}"
        )));
    }
    let steps = horizon - n_o + 1;
    if u_sets.len() != 1 && u_sets.len() != steps {
        return Err(Error::InvalidArgument(format!(
            "expected 1 or {steps} input sets, got {}",
            u_sets.len()
        )));
    }
    let mut z = z_init.clone();
    let mut lifted = vec![StepSet {
        step: n_o,
        set: z.clone(),
    }];
    let mut outputs = Vec::with_capacity(steps);
    for i in 0..steps {
        let k = n_o + i;
        let u = if u_sets.len() == 1 { &u_sets[0] } else { &u_sets[i] };
        z = propagate_step(ms, &z, u, eps)?.reduce(rho_max)?;
        if !z.is_finite() {
            return Err(Error::NonFinite { step: k + 1 });
        }
        outputs.push(StepSet {
            step: k,
            set: z.project_prefix(ms.meta.n_y)?,
        });
        lifted.push(StepSet {
            step: k + 1,
            set: z.clone(),
        });
    }
    Ok(ReachResult {
        n_o,
        horizon,
        rho_max,
        lifted_sets: lifted,
        output_sets: outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::DEFAULT_RANK_TOL;
    use crate::seeds;
    use crate::setalg::{probe_directions, MEMBERSHIP_TOL};
    use crate::sysim::{gen_dataset, oracle_from_system, CVariant, DatasetSpec, LtiSystem, NoiseSpec};
    use rand::Rng;

    fn toy_traj() -> Trajectory {
        Trajectory {
            seed: 0,
            inputs: vec![vec![5.0]; 3],
            outputs: vec![vec![0.0], vec![1.0], vec![2.0]],
            states: None,
        }
    }

    #[test]
    fn direct_stacking() {
        let lr = build_lifted(&[toy_traj()], 1).unwrap();
        assert_eq!(lr.t(), 1);
        assert_eq!(lr.z_plus.column(0), vec![1.0, 5.0]);
        assert_eq!(lr.phi_minus.column(0), vec![0.0, 5.0, 5.0]);
    }

    #[test]
    fn short_trajectories_skipped() {
        let mut short = toy_traj();
        short.outputs.pop();
        short.inputs.pop();
        let lr = build_lifted(&[short.clone(), toy_traj()], 1).unwrap();
        assert_eq!(lr.skipped, vec![0]);
        assert_eq!(lr.t(), 1);
        assert!(matches!(build_lifted(&[short], 1), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn shift_consistency() {
        let mut rng = seeds::rng(5);
        let n_o = 3;
        let trajs: Vec<Trajectory> = (0..100)
            .map(|s| {
                let len = rng.gen_range(n_o + 2..n_o + 9);
                Trajectory {
                    seed: s,
                    inputs: (0..len).map(|_| vec![rng.gen(), rng.gen()]).collect(),
                    outputs: (0..len).map(|_| vec![rng.gen(), rng.gen()]).collect(),
                    states: None,
                }
            })
            .collect();
        let lr = build_lifted(&trajs, n_o).unwrap();
        let (ny, nu) = (2, 2);
        let py = n_o * ny;
        for j in 0..lr.t() {
            let zp = lr.z_plus.column(j);
            let phi = lr.phi_minus.column(j);
            // older output lags shift down one block
            assert_eq!(&zp[ny..py], &phi[..py - ny]);
            // newest input slot holds the appended u_k
            assert_eq!(&zp[py..py + nu], &phi[lr.p()..]);
            assert_eq!(&zp[py + nu..], &phi[py..lr.p() - nu]);
        }
    }

    #[test]
    fn noise_matzono_structure() {
        let eps = Zonotope::from_box(vec![0.0; 2], &[0.006; 2]).unwrap();
        let m = build_noise_matzono(&eps, 50, 15, NoiseEmbedding::OutputBlock).unwrap();
        assert_eq!(m.num_generators(), 100);
        for g in m.generators() {
            let nonzero_cols: std::collections::BTreeSet<usize> =
                (0..50).filter(|&j| (0..15).any(|i| g[(i, j)] != 0.0)).collect();
            assert_eq!(nonzero_cols.len(), 1);
            for i in 2..15 {
                for j in 0..50 {
                    assert_eq!(g[(i, j)], 0.0);
                }
            }
        }
        let literal = Zonotope::new(vec![0.0; 2], &[vec![0.006; 2]]).unwrap();
        let m1 = build_noise_matzono(&literal, 50, 15, NoiseEmbedding::OutputBlock).unwrap();
        assert_eq!(m1.num_generators(), 50);
        let all = build_noise_matzono(&eps, 4, 15, NoiseEmbedding::AllOutputBlocks).unwrap();
        assert_eq!(all.num_generators(), 2 * 4 * 7);
    }

    #[test]
    fn noise_matzono_single_column() {
        let eps = Zonotope::new(vec![0.1, 0.0], &[vec![1.0, 2.0]]).unwrap();
        let m = build_noise_matzono(&eps, 1, 4, NoiseEmbedding::OutputBlock).unwrap();
        assert_eq!(m.center().column(0), vec![0.1, 0.0, 0.0, 0.0]);
        assert_eq!(m.generators()[0].column(0), vec![1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn noise_members_columnwise_in_bound() {
        let eps = Zonotope::new(vec![0.0, 0.0], &[vec![0.006, 0.0], vec![0.003, 0.004]]).unwrap();
        let m = build_noise_matzono(&eps, 7, 6, NoiseEmbedding::OutputBlock).unwrap();
        let mut rng = seeds::rng(8);
        for _ in 0..200 {
            let x = m.sample_member(&mut rng);
            for j in 0..7 {
                let col = x.column(j);
                assert!(eps.inflation_score(&col[..2]).unwrap() <= MEMBERSHIP_TOL);
                assert!(col[2..].iter().all(|v| *v == 0.0));
            }
        }
    }

    fn noise_free_setup(variant: CVariant, t: usize) -> (LtiSystem, LiftedRecord) {
        let sys = LtiSystem::default_five(variant);
        let noise = NoiseSpec::noiseless(&sys);
        let x0 = Zonotope::from_box(vec![1.0; 5], &[0.1; 5]).unwrap();
        let u = Zonotope::new(vec![10.0], &[vec![0.25]]).unwrap();
        let trajs = gen_dataset(&DatasetSpec {
            system: &sys,
            noise: &noise,
            x0_set: &x0,
            input_set: &u,
            count: 1,
            length: t + 6,
            master_seed: 3,
            keep_states: false,
        })
        .unwrap();
        (sys, build_lifted(&trajs, 5).unwrap())
    }

    #[test]
    fn noise_free_exact_regression_is_rank_deficient() {
        // Without noise the regressors live on an 11-dimensional subspace.
        let (_, lr) = noise_free_setup(CVariant::A, 50);
        let meps = MatrixZonotope::new(DenseMatrix::zeros(15, 50), vec![]).unwrap();
        assert!(matches!(
            build_model_set(&lr, &meps, 1e-6),
            Err(Error::RankDeficient {
                observed: 11,
                required: 16
            })
        ));
    }

    #[test]
    fn noise_free_scalar_reproduces_theta() {
        let sys = LtiSystem::new(
            DenseMatrix::from_rows(&[vec![0.5, 0.2], vec![-0.1, 0.7]]).unwrap(),
            DenseMatrix::from_rows(&[vec![1.0], vec![0.3]]).unwrap(),
            DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            1.0,
        )
        .unwrap();
        let oracle = oracle_from_system(&sys).unwrap();
        let noise = NoiseSpec::noiseless(&sys);
        let x0 = Zonotope::from_box(vec![0.0; 2], &[1.0; 2]).unwrap();
        let u = Zonotope::new(vec![0.0], &[vec![1.0]]).unwrap();
        // Many short runs from random initial states excite the full regressor space.
        let trajs = gen_dataset(&DatasetSpec {
            system: &sys,
            noise: &noise,
            x0_set: &x0,
            input_set: &u,
            count: 20,
            length: 6,
            master_seed: 9,
            keep_states: false,
        })
        .unwrap();
        let lr = build_lifted(&trajs, 2).unwrap();
        let meps = build_noise_matzono(
            &Zonotope::point(vec![0.0]).unwrap(),
            lr.t(),
            lr.p(),
            NoiseEmbedding::OutputBlock,
        )
        .unwrap();
        let ms = build_model_set(&lr, &meps, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ms.msigma.num_generators(), 0);
        let err = ms.msigma.center().sub(&oracle.theta).unwrap().max_abs();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn eps_scaling_doubles_generators() {
        let sys = LtiSystem::default_five(CVariant::B);
        let noise = NoiseSpec::default_for(&sys);
        let x0 = Zonotope::from_box(vec![1.0; 5], &[0.1; 5]).unwrap();
        let u = Zonotope::new(vec![10.0], &[vec![0.25]]).unwrap();
        let trajs = gen_dataset(&DatasetSpec {
            system: &sys,
            noise: &noise,
            x0_set: &x0,
            input_set: &u,
            count: 1,
            length: 30,
            master_seed: 1,
            keep_states: false,
        })
        .unwrap();
        let lr = build_lifted(&trajs, 5).unwrap();
        let m1 = build_noise_matzono(&noise.eps_bound, lr.t(), lr.p(), NoiseEmbedding::OutputBlock).unwrap();
        let m2 = build_noise_matzono(&noise.eps_bound.scale(2.0), lr.t(), lr.p(), NoiseEmbedding::OutputBlock).unwrap();
        let s1 = build_model_set(&lr, &m1, DEFAULT_RANK_TOL).unwrap();
        let s2 = build_model_set(&lr, &m2, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(s1.msigma.num_generators(), m1.num_generators());
        for (a, b) in s1.msigma.generators().iter().zip(s2.msigma.generators()) {
            assert!(b.sub(&a.scale(2.0)).unwrap().max_abs() <= 1e-12 * (1.0 + a.max_abs()));
        }
    }

    #[test]
    fn exact_model_point_propagation() {
        let sys = LtiSystem::default_five(CVariant::A);
        let oracle = oracle_from_system(&sys).unwrap();
        let ms = ModelSet::exact(oracle.theta.clone(), 5, 2, 1).unwrap();
        let z: Vec<f64> = (0..15).map(|i| i as f64 * 0.1).collect();
        let zk = Zonotope::point(z.clone()).unwrap();
        let uk = Zonotope::point(vec![2.0]).unwrap();
        let eps = Zonotope::point(vec![0.0, 0.0]).unwrap();
        let out = propagate_step(&ms, &zk, &uk, &eps).unwrap();
        let mut reg = z.clone();
        reg.push(2.0);
        let want = oracle.theta.mul_vec(&reg).unwrap();
        assert_eq!(out.num_generators(), 0);
        for (a, b) in out.center().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        // shift rows
        assert_eq!(&out.center()[2..10], &z[..8]);
        assert_eq!(out.center()[10], 2.0);
        assert_eq!(&out.center()[11..], &z[10..14]);
    }

    #[test]
    fn generator_count_before_reduction() {
        let theta = DenseMatrix::identity(3);
        let mut m = theta.clone();
        m = DenseMatrix::new(2, 3, m.data()[..6].to_vec()).unwrap();
        let ms = ModelSet {
            msigma: MatrixZonotope::new(m.clone(), vec![m.scale(0.1), m.scale(0.2)]).unwrap(),
            meta: ModelMeta {
                t: 1,
                n_o: 1,
                n_y: 1,
                n_u: 1,
                rank: 3,
                rank_tol: 0.0,
                sigma_max: 1.0,
                sigma_min: 1.0,
            },
        };
        let zk = Zonotope::new(vec![1.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let uk = Zonotope::new(vec![0.0], &[vec![1.0]]).unwrap();
        let eps = Zonotope::from_box(vec![0.0], &[0.1]).unwrap();
        let out = propagate_step(&ms, &zk, &uk, &eps).unwrap();
        assert_eq!(out.num_generators(), 3 * (3 + 1 + 1) - 1 + 1);
    }

    #[test]
    fn single_step_horizon() {
        let sys = LtiSystem::default_five(CVariant::A);
        let oracle = oracle_from_system(&sys).unwrap();
        let ms = ModelSet::exact(oracle.theta, 5, 2, 1).unwrap();
        let y = Zonotope::from_box(vec![1.0, 1.0], &[0.1, 0.1]).unwrap();
        let u = Zonotope::new(vec![10.0], &[vec![0.25]]).unwrap();
        let z0 = initial_lifted_set(&vec![y; 5], &vec![u.clone(); 5]).unwrap();
        let eps = Zonotope::point(vec![0.0; 2]).unwrap();
        let r = run_reachability(&ms, &z0, &[u], &eps, 5, 200).unwrap();
        assert_eq!(r.output_sets.len(), 1);
        assert_eq!(r.output_sets[0].step, 5);
        assert_eq!(r.lifted_sets.len(), 2);
        assert_eq!(r.output_sets[0].set, r.lifted_sets[1].set.project_prefix(2).unwrap());
    }

    #[test]
    fn initial_set_order() {
        let ys: Vec<Zonotope> = (0..3).map(|i| Zonotope::point(vec![i as f64]).unwrap()).collect();
        let us: Vec<Zonotope> = (0..3)
            .map(|i| Zonotope::point(vec![10.0 + i as f64]).unwrap())
            .collect();
        let z = initial_lifted_set(&ys, &us).unwrap();
        assert_eq!(z.center(), &[2.0, 1.0, 0.0, 12.0, 11.0, 10.0]);
    }

    #[test]
    fn divergence_reports_step() {
        let theta = DenseMatrix::new(1, 2, vec![1e200, 0.0]).unwrap();
        let ms = ModelSet::exact(theta, 1, 1, 0).unwrap_err();
        assert!(matches!(ms, Error::DimensionMismatch { .. }));
        let ms = ModelSet::exact(
            DenseMatrix::new(2, 3, vec![1e200, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            1,
            1,
            1,
        )
        .unwrap();
        let z0 = Zonotope::point(vec![1e200, 1.0]).unwrap();
        let u = Zonotope::point(vec![1.0]).unwrap();
        let eps = Zonotope::point(vec![0.0]).unwrap();
        let err = run_reachability(&ms, &z0, &[u], &eps, 4, 10).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 2 }), "{err:?}");
    }

    #[test]
    fn monotone_in_eps_and_input() {
        let sys = LtiSystem::default_five(CVariant::C);
        let noise = NoiseSpec::default_for(&sys);
        let x0 = Zonotope::from_box(vec![1.0; 5], &[0.1; 5]).unwrap();
        let u = Zonotope::new(vec![10.0], &[vec![0.25]]).unwrap();
        let trajs = gen_dataset(&DatasetSpec {
            system: &sys,
            noise: &noise,
            x0_set: &x0,
            input_set: &u,
            count: 1,
            length: 40,
            master_seed: 2,
            keep_states: false,
        })
        .unwrap();
        let lr = build_lifted(&trajs, 5).unwrap();
        let meps = build_noise_matzono(&noise.eps_bound, lr.t(), lr.p(), NoiseEmbedding::OutputBlock).unwrap();
        let ms = build_model_set(&lr, &meps, DEFAULT_RANK_TOL).unwrap();
        let y = Zonotope::from_box(vec![1.0, 1.0], &[0.05, 0.05]).unwrap();
        let z0 = initial_lifted_set(&vec![y; 5], &vec![u.clone(); 5]).unwrap();
        let small = propagate_step(&ms, &z0, &u, &noise.eps_bound).unwrap();
        let big_eps = propagate_step(&ms, &z0, &u, &noise.eps_bound.scale(3.0)).unwrap();
        let big_u = propagate_step(
            &ms,
            &z0,
            &u.scale(1.0)
                .minkowski_sum(&Zonotope::new(vec![0.0], &[vec![0.1]]).unwrap())
                .unwrap(),
            &noise.eps_bound,
        )
        .unwrap();
        let dirs = probe_directions(15, 64, 11);
        assert!(big_eps.dominates_along(&small, &dirs, 1e-9).unwrap());
        assert!(big_u.dominates_along(&small, &dirs, 1e-9).unwrap());
    }

    #[test]
    fn model_set_json_has_meta_block() {
        let ms = ModelSet::exact(
            DenseMatrix::new(2, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            1,
            1,
            1,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(&ms).unwrap();
        assert!(v.get("center").is_some());
        assert!(v.get("generators").is_some());
        assert_eq!(v["meta"]["n_o"], 1);
    }
}
