//! Experiment configuration: one JSON document, validated at load.

use std::path::{Path, PathBuf};

use reachzono::ddreach::NoiseEmbedding;
use reachzono::linsolve::{DenseMatrix, DEFAULT_RANK_TOL};
use reachzono::setalg::Zonotope;
use reachzono::surrogate::{Architecture, ContextInit, FeedbackMode, TokenizerConfig};
use reachzono::sysim::{validate_residual_bound, CVariant, LtiSystem, NoiseSpec};
use reachzono::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedSystem {
    /// The five-state oscillatory reference system.
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemMatrices {
    #[serde(rename = "A")]
    pub a: DenseMatrix,
    #[serde(rename = "B")]
    pub b: DenseMatrix,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Named(NamedSystem),
    Matrices(SystemMatrices),
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec::Named(NamedSystem::Default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CMatrix {
    Variant(CVariant),
    Matrix(DenseMatrix),
}

impl Default for CMatrix {
    fn default() -> Self {
        CMatrix::Variant(CVariant::A)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBoxes {
    pub w_box: Zonotope,
    pub v_box: Zonotope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSection {
    pub k_g: usize,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSection {
    /// Directory holding `manifest.json` and `weights.bin`. When absent the
    /// `init-weights` stage writes a seeded random bundle under the output
    /// directory.
    pub weights: Option<PathBuf>,
    pub init_seed: u64,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub context_init: ContextInit,
    pub feedback: FeedbackMode,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        SurrogateSection {
            weights: None,
            init_seed: 0,
            d_model: 128,
            n_heads: 8,
            n_layers: 4,
            d_ff: 512,
            context_init: ContextInit::Fitted,
            feedback: FeedbackMode::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelSection {
    /// Number of perturbed initial conditions.
    pub n_s: usize,
    /// Trajectories simulated per sample for context fitting and strips.
    pub m_per_sample: usize,
    /// Generator scale of the per-sample initial set relative to `x0_set`.
    pub x0_shrink: f64,
    pub strip_inflation: f64,
    pub n_ray: usize,
}

impl Default for LabelSection {
    fn default() -> Self {
        LabelSection {
            n_s: 8,
            m_per_sample: 100,
            x0_shrink: 0.5,
            strip_inflation: 0.1,
            n_ray: reachzono::fitcert::DEFAULT_N_RAY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSection {
    /// Trajectories used to fit the initial context zonotopes.
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub n_cal: usize,
    pub delta: f64,
    /// Trajectories simulated before filtering; the first `n_cal` retained
    /// ones are used.
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub n_test: usize,
    pub pool: usize,
    /// Trajectories for the Monte Carlo hull.
    pub n_mc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(rename = "C_matrix", default)]
    pub c_matrix: CMatrix,
    /// Process and measurement noise boxes; small defaults when absent.
    #[serde(default)]
    pub noise: Option<NoiseBoxes>,
    pub x0_set: Zonotope,
    pub input_set: Zonotope,
    pub eps_bound: Zonotope,
    #[serde(rename = "T")]
    pub t: usize,
    pub n_o: usize,
    pub rho_max: usize,
    pub horizon: usize,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default)]
    pub noise_embedding: NoiseEmbedding,
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub surrogate: SurrogateSection,
    #[serde(default)]
    pub labels: LabelSection,
    pub context: ContextSection,
    pub calibration: CalibrationSection,
    pub evaluation: EvaluationSection,
    pub seeds: Seeds,
    #[serde(default)]
    pub paths: Paths,
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub c_variant: Option<CVariant>,
    pub feedback: Option<FeedbackMode>,
    pub out: Option<PathBuf>,
}

/// A validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub system: LtiSystem,
    pub noise: NoiseSpec,
    pub tokenizer: TokenizerConfig,
    pub architecture: Architecture,
    /// SHA-256 of the effective configuration, output path excluded.
    pub config_hash: String,
    pub out: PathBuf,
    pub weights_dir: Option<PathBuf>,
}

pub fn parse(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let field = match unknown_field(&message) {
            Some(name) if path == "." => name.to_string(),
            Some(name) if path == name || path.ends_with(&format!(".{name}")) => path,
            Some(name) => format!("{path}.{name}"),
            None => path,
        };
        CliError::config(field, message)
    })
}

fn unknown_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("unknown field `")?;
    rest.split('`').next()
}

pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Experiment> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    Experiment::new(parse(&text)?, overrides, base)
}

fn field(name: &str) -> impl Fn(CoreError) -> CliError + '_ {
    move |e| CliError::config(name, e.to_string())
}

fn require(ok: bool, name: &str, message: impl Into<String>) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(name, message))
    }
}

fn check_dim(z: &Zonotope, dim: usize, name: &str) -> CliResult<()> {
    require(
        z.dim() == dim,
        name,
        format!("expected dimension {dim}, got {}", z.dim()),
    )?;
    require(z.is_finite(), name, "entries must be finite")
}

impl Experiment {
    /// Applies overrides, validates, and derives the system, noise and
    /// tokenizer. Relative paths in the file resolve against `base`.
    pub fn new(mut cfg: ExperimentConfig, overrides: &Overrides, base: &Path) -> CliResult<Self> {
        if let Some(seed) = overrides.seed {
            cfg.seeds.master = seed;
        }
        if let Some(v) = overrides.c_variant {
            cfg.c_matrix = CMatrix::Variant(v);
        }
        if let Some(f) = overrides.feedback {
            cfg.surrogate.feedback = f;
        }

        let (a, b, dt) = match &cfg.system {
            SystemSpec::Named(NamedSystem::Default) => {
                let s = LtiSystem::default_five(CVariant::A);
                (s.a().clone(), s.b().clone(), s.dt())
            }
            SystemSpec::Matrices(m) => (m.a.clone(), m.b.clone(), m.dt),
        };
        require(
            a.rows() == a.cols() && a.rows() > 0,
            "system.A",
            "A must be square and nonempty",
        )?;
        require(
            b.rows() == a.rows() && b.cols() > 0,
            "system.B",
            format!("B must have {} rows", a.rows()),
        )?;
        require(dt > 0.0 && dt.is_finite(), "system.dt", "dt must be positive")?;
        let c = match &cfg.c_matrix {
            CMatrix::Variant(v) => v.matrix(),
            CMatrix::Matrix(m) => m.clone(),
        };
        require(
            c.cols() == a.rows() && c.rows() > 0,
            "C_matrix",
            format!("C must be n_y x {}, got {}x{}", a.rows(), c.rows(), c.cols()),
        )?;
        let system = LtiSystem::new(a, b, c, dt).map_err(|e| match e {
            CoreError::Unobservable { .. } => CliError::config("C_matrix", e.to_string()),
            other => CliError::config("system", other.to_string()),
        })?;
        let (nx, nu, ny) = (system.nx(), system.nu(), system.ny());

        check_dim(&cfg.x0_set, nx, "x0_set")?;
        check_dim(&cfg.input_set, nu, "input_set")?;
        check_dim(&cfg.eps_bound, ny, "eps_bound")?;
        require(
            cfg.eps_bound
                .contains_point(&vec![0.0; ny], 1e-9)
                .map_err(field("eps_bound"))?,
            "eps_bound",
            "must contain the origin",
        )?;
        let noise = match &cfg.noise {
            Some(n) => {
                check_dim(&n.w_box, nx, "noise.w_box")?;
                check_dim(&n.v_box, ny, "noise.v_box")?;
                NoiseSpec {
                    w_box: n.w_box.clone(),
                    v_box: n.v_box.clone(),
                    eps_bound: cfg.eps_bound.clone(),
                }
            }
            None => NoiseSpec {
                eps_bound: cfg.eps_bound.clone(),
                ..NoiseSpec::default_for(&system)
            },
        };
        validate_residual_bound(&system, &noise).map_err(field("eps_bound"))?;

        require(cfg.n_o >= 1, "n_o", "must be at least 1")?;
        require(cfg.t >= 1, "T", "must be at least 1")?;
        require(cfg.rho_max >= 1, "rho_max", "must be at least 1")?;
        require(
            cfg.horizon >= cfg.n_o,
            "horizon",
            format!("must be at least n_o = {}", cfg.n_o),
        )?;
        require(
            cfg.rank_tol > 0.0 && cfg.rank_tol < 1.0,
            "rank_tol",
            "must lie in (0, 1)",
        )?;

        let tokenizer = TokenizerConfig {
            n_y: ny,
            k_g: cfg.tokenizer.k_g,
            t_max: cfg.tokenizer.t_max,
            n_o: cfg.n_o,
        };
        tokenizer.validate().map_err(field("tokenizer"))?;
        let s = &cfg.surrogate;
        let architecture = Architecture::new(s.d_model, s.n_heads, s.n_layers, s.d_ff, ny, cfg.tokenizer.k_g, cfg.n_o);
        architecture.validate().map_err(field("surrogate"))?;

        let l = &cfg.labels;
        require(l.n_s >= 1, "labels.n_s", "must be at least 1")?;
        require(l.m_per_sample >= 1, "labels.m_per_sample", "must be at least 1")?;
        require(
            (0.0..=1.0).contains(&l.x0_shrink),
            "labels.x0_shrink",
            "must lie in [0, 1]",
        )?;
        require(
            l.strip_inflation >= 0.0,
            "labels.strip_inflation",
            "must be nonnegative",
        )?;
        require(l.n_ray >= 2, "labels.n_ray", "must be at least 2")?;
        require(cfg.context.m >= 1, "context.m", "must be at least 1")?;
        let cal = &cfg.calibration;
        require(
            cal.delta > 0.0 && cal.delta < 1.0,
            "calibration.delta",
            "must lie in (0, 1)",
        )?;
        require(cal.n_cal >= 1, "calibration.n_cal", "must be at least 1")?;
        require(cal.pool >= cal.n_cal, "calibration.pool", "must be at least n_cal")?;
        let ev = &cfg.evaluation;
        require(ev.n_test >= 1, "evaluation.n_test", "must be at least 1")?;
        require(ev.pool >= ev.n_test, "evaluation.pool", "must be at least n_test")?;
        require(ev.n_mc >= 1, "evaluation.n_mc", "must be at least 1")?;

        let out = match (&overrides.out, &cfg.paths.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => PathBuf::from("out"),
        };
        let weights_dir = cfg.surrogate.weights.as_ref().map(|w| base.join(w));
        let mut hashed = cfg.clone();
        hashed.paths = Paths::default();
        let config_hash = sha256_hex(serde_json::to_string(&hashed).expect("config serializes").as_bytes());

        Ok(Experiment {
            cfg,
            system,
            noise,
            tokenizer,
            architecture,
            config_hash,
            out,
            weights_dir,
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.cfg.seeds.master
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
