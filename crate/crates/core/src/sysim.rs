//! Ground-truth LTI simulator, dataset generation and the
//! characteristic-polynomial oracle used by tests and baselines.
//!
//! Nothing in [`crate::ddreach`] reads the system matrices; they exist here
//! only to generate data and to build reference sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::linsolve::{rank, DenseMatrix};
use crate::seeds;
use crate::setalg::{IntervalBox, Zonotope, MEMBERSHIP_TOL};

/// `x⁺ = A x + B u + w`, `y = C x + v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    dt: f64,
}

/// Output matrices of the five-state reference system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CVariant {
    /// cross-block
    A,
    /// gradient
    B,
    /// pairwise
    C,
}

impl CVariant {
    pub fn matrix(self) -> DenseMatrix {
        let rows = match self {
            CVariant::A => [[0.6, 0.0, 0.8, 0.0, 0.0], [0.0, 0.8, 0.0, 0.0, 0.6]],
            CVariant::B => [[0.4, 0.3, 0.2, 0.1, 0.0], [0.0, 0.1, 0.2, 0.3, 0.4]],
            CVariant::C => [[0.5, 0.5, 0.0, 0.0, 0.0], [0.0, 0.0, 0.3, 0.0, 0.7]],
        };
        DenseMatrix::from_rows(&rows.map(|r| r.to_vec())).expect("static shape")
    }

    pub fn all() -> [CVariant; 3] {
        [CVariant::A, CVariant::B, CVariant::C]
    }
}

impl std::str::FromStr for CVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(CVariant::A),
            "b" | "B" => Ok(CVariant::B),
            "c" | "C" => Ok(CVariant::C),
            other => Err(Error::InvalidArgument(format!("unknown C variant '{other}'"))),
        }
    }
}

fn rotation_block(radius: f64, angle: f64) -> DenseMatrix {
    let (s, c) = angle.sin_cos();
    DenseMatrix::from_rows(&[vec![radius * c, -radius * s], vec![radius * s, radius * c]]).expect("2x2")
}

impl LtiSystem {
    /// Validates shapes and observability of `(C, A)`.
    pub fn new(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix, dt: f64) -> Result<Self> {
        let nx = a.rows();
        if a.cols() != nx || b.rows() != nx || c.cols() != nx {
            return Err(Error::DimensionMismatch {
                op: "LtiSystem::new",
                left: format!("A {}", shape(a.rows(), a.cols())),
                right: format!("B {}, C {}", shape(b.rows(), b.cols()), shape(c.rows(), c.cols())),
            });
        }
        let sys = Self { a, b, c, dt };
        let r = rank(&sys.observability_matrix()?, 1e-10)?;
        if r < nx {
            return Err(Error::Unobservable { rank: r, required: nx });
        }
        Ok(sys)
    }

    /// Five-state oscillatory reference: two damped rotations
    /// (0.95∠0.1, 0.9∠0.2) and a real pole at 0.9, `B = 1`, `dt = 0.05`.
    pub fn default_five(variant: CVariant) -> Self {
        let mut a = DenseMatrix::zeros(5, 5);
        a.set_block(0, 0, &rotation_block(0.95, 0.1));
        a.set_block(2, 2, &rotation_block(0.9, 0.2));
        a[(4, 4)] = 0.9;
        let b = DenseMatrix::new(5, 1, vec![1.0; 5]).expect("5x1");
        Self::new(a, b, variant.matrix(), 0.05).expect("reference system is observable")
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }
    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }
    pub fn c(&self) -> &DenseMatrix {
        &self.c
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn nx(&self) -> usize {
        self.a.rows()
    }
    pub fn nu(&self) -> usize {
        self.b.cols()
    }
    pub fn ny(&self) -> usize {
        self.c.rows()
    }

    pub fn observability_matrix(&self) -> Result<DenseMatrix> {
        let nx = self.nx();
        let ny = self.ny();
        let mut o = DenseMatrix::zeros(nx * ny, nx);
        let mut cak = self.c.clone();
        for k in 0..nx {
            o.set_block(k * ny, 0, &cak);
            cak = cak.matmul(&self.a)?;
        }
        Ok(o)
    }
}

/// Process noise, measurement noise and the aggregated residual bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub w_box: Zonotope,
    pub v_box: Zonotope,
    pub eps_bound: Zonotope,
}

impl NoiseSpec {
    /// Boxes `±1e-4` on every state and output, residual bound `±0.006`
    /// per output coordinate.
    pub fn default_for(sys: &LtiSystem) -> Self {
        NoiseSpec {
            w_box: Zonotope::from_box(vec![0.0; sys.nx()], &vec![1e-4; sys.nx()]).expect("box"),
            v_box: Zonotope::from_box(vec![0.0; sys.ny()], &vec![1e-4; sys.ny()]).expect("box"),
            eps_bound: Zonotope::from_box(vec![0.0; sys.ny()], &vec![0.006; sys.ny()]).expect("box"),
        }
    }

    pub fn noiseless(sys: &LtiSystem) -> Self {
        NoiseSpec {
            w_box: Zonotope::point(vec![0.0; sys.nx()]).expect("point"),
            v_box: Zonotope::point(vec![0.0; sys.ny()]).expect("point"),
            eps_bound: Zonotope::point(vec![0.0; sys.ny()]).expect("point"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.outputs.len() {
            return Err(Error::InvalidArgument(format!(
                "trajectory {} has {} inputs but {} outputs",
                self.seed,
                self.inputs.len(),
                self.outputs.len()
            )));
        }
        if !self.inputs.iter().chain(&self.outputs).flatten().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "trajectory {} has non-finite entries",
                self.seed
            )));
        }
        Ok(())
    }
}

/// Simulates `inputs.len()` steps from `x0`; noise drawn uniformly from the
/// boxes with a generator seeded by `seed`.
pub fn simulate(sys: &LtiSystem, x0: &[f64], inputs: &[Vec<f64>], noise: &NoiseSpec, seed: u64) -> Result<Trajectory> {
    if x0.len() != sys.nx() {
        return Err(Error::DimensionMismatch {
            op: "simulate",
            left: format!("state dimension {}", sys.nx()),
            right: format!("x0 of length {}", x0.len()),
        });
    }
    if noise.w_box.dim() != sys.nx() || noise.v_box.dim() != sys.ny() {
        return Err(Error::DimensionMismatch {
            op: "simulate",
            left: format!("nx {} / ny {}", sys.nx(), sys.ny()),
            right: format!("w {} / v {}", noise.w_box.dim(), noise.v_box.dim()),
        });
    }
    if let Some(u) = inputs.iter().find(|u| u.len() != sys.nu()) {
        return Err(Error::DimensionMismatch {
            op: "simulate",
            left: format!("input dimension {}", sys.nu()),
            right: format!("input of length {}", u.len()),
        });
    }
    let mut rng = seeds::rng(seed);
    let mut x = x0.to_vec();
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut states = Vec::with_capacity(inputs.len());
    for u in inputs {
        let v = noise.v_box.sample_member(&mut rng);
        let mut y = sys.c.mul_vec_unchecked(&x);
        for (yi, vi) in y.iter_mut().zip(&v) {
            *yi += vi;
        }
        outputs.push(y);
        states.push(x.clone());
        let w = noise.w_box.sample_member(&mut rng);
        let ax = sys.a.mul_vec_unchecked(&x);
        let bu = sys.b.mul_vec_unchecked(u);
        x = ax.iter().zip(&bu).zip(&w).map(|((a, b), w)| a + b + w).collect();
    }
    Ok(Trajectory {
        seed,
        inputs: inputs.to_vec(),
        outputs,
        states: Some(states),
    })
}

/// Everything needed to draw a reproducible batch of trajectories.
#[derive(Debug, Clone)]
pub struct DatasetSpec<'a> {
    pub system: &'a LtiSystem,
    pub noise: &'a NoiseSpec,
    pub x0_set: &'a Zonotope,
    pub input_set: &'a Zonotope,
    pub count: usize,
    pub length: usize,
    pub master_seed: u64,
    /// Keep simulated states (oracle mode).
    pub keep_states: bool,
}

/// Trajectory `i` uses seed `derive(master_seed, i)` for its initial state,
/// inputs and noise, so results do not depend on generation order.
pub fn gen_dataset(spec: &DatasetSpec<'_>) -> Result<Vec<Trajectory>> {
    (0..spec.count)
        .map(|i| gen_one(spec, seeds::derive(spec.master_seed, i as u64)))
        .collect()
}

fn gen_one(spec: &DatasetSpec<'_>, seed: u64) -> Result<Trajectory> {
    let mut rng = seeds::rng(seed);
    let x0 = spec.x0_set.sample_member(&mut rng);
    let inputs: Vec<Vec<f64>> = (0..spec.length)
        .map(|_| spec.input_set.sample_member(&mut rng))
        .collect();
    let noise_seed = rng.gen::<u64>();
    let mut t = simulate(spec.system, &x0, &inputs, spec.noise, noise_seed)?;
    t.seed = seed;
    if !spec.keep_states {
        t.states = None;
    }
    Ok(t)
}

/// Coefficients `λⁿ + a₁λⁿ⁻¹ + … + aₙ` by the Faddeev–LeVerrier recursion.
/// Returns `[a₁, …, aₙ]`.
pub fn characteristic_polynomial(a: &DenseMatrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::InvalidArgument(
            "characteristic polynomial of non-square matrix".into(),
        ));
    }
    let mut coeffs = Vec::with_capacity(n);
    let mut m = DenseMatrix::zeros(n, n);
    let mut prev = 1.0;
    for k in 1..=n {
        m = a.matmul(&m)?;
        for i in 0..n {
            m[(i, i)] += prev;
        }
        let ak = -a.matmul(&m)?.trace() / k as f64;
        coeffs.push(ak);
        prev = ak;
    }
    Ok(coeffs)
}

/// True autoregressive parameters of a known system (test-only oracle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    /// `a₁ … a_{n_o}`.
    pub a_coeffs: Vec<f64>,
    /// `b₁ … b_{n_o}`, each `n_y × n_u`.
    pub b_coeffs: Vec<DenseMatrix>,
    /// Lifted transition matrix `Θᵀ` of shape `p × (p + n_u)`.
    pub theta: DenseMatrix,
    pub n_o: usize,
    pub n_y: usize,
    pub n_u: usize,
}

pub fn oracle_from_system(sys: &LtiSystem) -> Result<OracleModel> {
    let (nx, ny, nu) = (sys.nx(), sys.ny(), sys.nu());
    let n_o = nx;
    let a_coeffs = characteristic_polynomial(sys.a())?;
    let a_full: Vec<f64> = std::iter::once(1.0).chain(a_coeffs.iter().copied()).collect();

    let mut powers = vec![DenseMatrix::identity(nx)];
    for k in 1..n_o {
        let next = powers[k - 1].matmul(sys.a())?;
        powers.push(next);
    }
    // b_i = Σ_{j=0}^{i-1} a_j C A^{i-1-j} B
    let mut b_coeffs = Vec::with_capacity(n_o);
    for i in 1..=n_o {
        let mut acc = DenseMatrix::zeros(ny, nu);
        for j in 0..i {
            let term = sys.c().matmul(&powers[i - 1 - j])?.matmul(sys.b())?.scale(a_full[j]);
            acc = acc.add(&term)?;
        }
        b_coeffs.push(acc);
    }
    let theta = assemble_theta(&a_coeffs, &b_coeffs, ny, nu);
    Ok(OracleModel {
        a_coeffs,
        b_coeffs,
        theta,
        n_o,
        n_y: ny,
        n_u: nu,
    })
}

/// Lifted transition for `z = (y_{k−1}, …, y_{k−n_o}, u_{k−1}, …, u_{k−n_o})`
/// and regressor `[z; u_k]`: the first `n_y` rows hold the autoregressive
/// coefficients, the rest shift the window and append `u_k`.
fn assemble_theta(a: &[f64], b: &[DenseMatrix], ny: usize, nu: usize) -> DenseMatrix {
    let n_o = a.len();
    let py = n_o * ny;
    let p = n_o * (ny + nu);
    let mut th = DenseMatrix::zeros(p, p + nu);
    for i in 0..n_o {
        for d in 0..ny {
            th[(d, i * ny + d)] = -a[i];
        }
        th.set_block(0, py + i * nu, &b[i]);
    }
    for i in 1..n_o {
        th.set_block(i * ny, (i - 1) * ny, &DenseMatrix::identity(ny));
    }
    th.set_block(py, p, &DenseMatrix::identity(nu));
    for i in 1..n_o {
        th.set_block(py + i * nu, py + (i - 1) * nu, &DenseMatrix::identity(nu));
    }
    th
}

impl OracleModel {
    /// `ε_k = y_k + Σ aᵢ y_{k−i} − Σ bᵢ u_{k−i}` for `k ≥ n_o`.
    pub fn residual(&self, traj: &Trajectory, k: usize) -> Result<Vec<f64>> {
        if k < self.n_o || k >= traj.len() {
            return Err(Error::IndexOutOfRange {
                op: "residual",
                index: k,
                dim: traj.len(),
            });
        }
        let mut eps = traj.outputs[k].clone();
        for i in 1..=self.n_o {
            let yi = &traj.outputs[k - i];
            let bu = self.b_coeffs[i - 1].mul_vec(&traj.inputs[k - i])?;
            for d in 0..self.n_y {
                eps[d] += self.a_coeffs[i - 1] * yi[d] - bu[d];
            }
        }
        Ok(eps)
    }

    /// Exact residual set `⊕ᵢ Mᵢ W ⊕ ⊕ᵢ aᵢ V` for the given noise boxes,
    /// with `Mᵢ = Σ_{j≤i} a_j C A^{i−j}`.
    pub fn residual_set(&self, sys: &LtiSystem, w_box: &Zonotope, v_box: &Zonotope) -> Result<Zonotope> {
        let a_full: Vec<f64> = std::iter::once(1.0).chain(self.a_coeffs.iter().copied()).collect();
        let mut set = v_box.clone();
        for ai in &self.a_coeffs {
            set = set.minkowski_sum(&v_box.scale(*ai))?;
        }
        for i in 0..self.n_o {
            let mut m = DenseMatrix::zeros(self.n_y, sys.nx());
            for j in 0..=i {
                let term = sys.c().matmul(&sys.a().pow((i - j) as u32)?)?.scale(a_full[j]);
                m = m.add(&term)?;
            }
            set = set.minkowski_sum(&w_box.linear_map(&m)?)?;
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub total: usize,
    pub inside: usize,
    pub fraction_inside: f64,
    /// Empirical per-coordinate residual range.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn residual_check(trajs: &[Trajectory], oracle: &OracleModel, eps_bound: &Zonotope) -> Result<ResidualReport> {
    let mut total = 0;
    let mut inside = 0;
    let mut min = vec![f64::INFINITY; oracle.n_y];
    let mut max = vec![f64::NEG_INFINITY; oracle.n_y];
    for t in trajs {
        if t.len() <= oracle.n_o {
            return Err(Error::InvalidArgument(format!(
                "trajectory {} of length {} is too short for order {}",
                t.seed,
                t.len(),
                oracle.n_o
            )));
        }
        for k in oracle.n_o..t.len() {
            let e = oracle.residual(t, k)?;
            for d in 0..oracle.n_y {
                min[d] = min[d].min(e[d]);
                max[d] = max[d].max(e[d]);
            }
            total += 1;
            if eps_bound.inflation_score(&e)? <= MEMBERSHIP_TOL {
                inside += 1;
            }
        }
    }
    Ok(ResidualReport {
        total,
        inside,
        fraction_inside: if total == 0 { 1.0 } else { inside as f64 / total as f64 },
        min,
        max,
    })
}

/// Checks that every residual the noise boxes can produce lies in
/// `eps_bound`. Exact when `eps_bound` is an axis-aligned box; otherwise a
/// support-function check in 256 directions.
pub fn validate_residual_bound(sys: &LtiSystem, noise: &NoiseSpec) -> Result<()> {
    let oracle = oracle_from_system(sys)?;
    let achievable = oracle.residual_set(sys, &noise.w_box, &noise.v_box)?;
    let eps = &noise.eps_bound;
    if eps.inflation_score(&vec![0.0; eps.dim()])? > MEMBERSHIP_TOL {
        return Err(Error::ResidualBound("eps_bound does not contain the origin".into()));
    }
    let is_box = eps.generators().all(|g| g.iter().filter(|v| **v != 0.0).count() <= 1);
    let ok = if is_box {
        eps.interval_hull().contains_box(&achievable.interval_hull(), 1e-12)
    } else {
        let dirs = crate::setalg::probe_directions(eps.dim(), 256, 0x5eed);
        eps.dominates_along(&achievable, &dirs, 1e-12)?
    };
    if !ok {
        let r = achievable.radius();
        return Err(Error::ResidualBound(format!(
            "noise boxes can produce residual radius {r:?}, outside eps_bound"
        )));
    }
    Ok(())
}

/// Componentwise min/max of the outputs at step `k`.
pub fn mc_hull(trajs: &[Trajectory], k: usize) -> Result<IntervalBox> {
    let pts: Vec<&[f64]> = trajs
        .iter()
        .filter(|t| t.len() > k)
        .map(|t| t.outputs[k].as_slice())
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyInput("no trajectory reaches the requested step"));
    }
    IntervalBox::hull_of_points(pts)
}

/// Classical model-based output sets `Y_k = C X_k ⊕ V` for `k = 0..=horizon`,
/// with `X_{k+1} = A X_k ⊕ B U ⊕ W`. Optional reduction keeps the state set
/// at the given order.
pub fn model_based_reach(
    sys: &LtiSystem,
    x0_set: &Zonotope,
    input_set: &Zonotope,
    w_box: &Zonotope,
    v_box: &Zonotope,
    horizon: usize,
    reduce_order: Option<usize>,
) -> Result<Vec<Zonotope>> {
    let bu = input_set.linear_map(sys.b())?;
    let mut x = x0_set.clone();
    let mut out = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        out.push(x.linear_map(sys.c())?.minkowski_sum(v_box)?);
        if k == horizon {
            break;
        }
        x = x.linear_map(sys.a())?.minkowski_sum(&bu)?.minkowski_sum(w_box)?;
        if let Some(order) = reduce_order {
            x = x.reduce(order)?;
        }
    }
    Ok(out)
}
