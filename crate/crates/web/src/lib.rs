//! WebAssembly entry points for the static demo page in `www/`.
//!
//! Every export takes and returns JSON strings. The `*_json` functions carry
//! the logic and are what the native tests call.

use reachzono::conformal::{quantile, quantile_rank};
use reachzono::ddreach::{
    build_lifted, build_model_set, build_noise_matzono, initial_lifted_set, run_reachability, NoiseEmbedding,
};
use reachzono::fitcert::pca_fit;
use reachzono::linsolve::DEFAULT_RANK_TOL;
use reachzono::setalg::{outline_2d, Zonotope};
use reachzono::sysim::{
    gen_dataset, mc_hull, model_based_reach, CVariant, DatasetSpec, LtiSystem, NoiseSpec, Trajectory,
};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

const OUTLINE_POINTS: usize = 96;
const MAX_POINTS_SHOWN: usize = 300;

type Outline = Vec<[f64; 2]>;

fn outline(z: &Zonotope) -> Result<Outline, String> {
    outline_2d(z, OUTLINE_POINTS).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
struct ReduceRequest {
    #[serde(flatten)]
    set: Zonotope,
    order: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReduceResponse {
    pub generators_before: usize,
    pub generators_after: usize,
    pub original: Outline,
    pub reduced: Outline,
    /// `[x_lo, x_hi, y_lo, y_hi]` of the reduced set.
    pub reduced_hull: [f64; 4],
}

/// Order-reduces a 2-D zonotope `{center, generators, order}`.
pub fn reduce_json(request: &str) -> Result<String, String> {
    let req: ReduceRequest = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    if req.set.dim() != 2 {
        return Err(format!("the demo draws 2-D sets, got dimension {}", req.set.dim()));
    }
    let reduced = req.set.reduce(req.order).map_err(|e| e.to_string())?;
    let h = reduced.interval_hull();
    let resp = ReduceResponse {
        generators_before: req.set.num_generators(),
        generators_after: reduced.num_generators(),
        original: outline(&req.set)?,
        reduced: outline(&reduced)?,
        reduced_hull: [h.lower()[0], h.upper()[0], h.lower()[1], h.upper()[1]],
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
struct QuantileRequest {
    scores: Vec<f64>,
    delta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuantileResponse {
    pub n: usize,
    /// 1-based order statistic; larger than `n` means the quantile is +∞.
    pub rank: usize,
    /// `None` when the quantile is infinite.
    pub q: Option<f64>,
}

/// Split-conformal quantile of `{scores, delta}`.
pub fn quantile_json(request: &str) -> Result<String, String> {
    let req: QuantileRequest = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    let q = quantile(&req.scores, req.delta).map_err(|e| e.to_string())?;
    let resp = QuantileResponse {
        n: req.scores.len(),
        rank: quantile_rank(req.scores.len(), req.delta),
        q: q.is_finite().then_some(q),
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

fn default_horizon() -> usize {
    7
}

fn default_mc() -> usize {
    300
}

#[derive(Debug, Deserialize)]
struct ReachRequest {
    /// `"a"`, `"b"` or `"c"`.
    c_variant: String,
    seed: u64,
    #[serde(default = "default_horizon")]
    horizon: usize,
    #[serde(default = "default_mc")]
    n_mc: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StepView {
    pub step: usize,
    pub dd: Outline,
    pub model_based: Outline,
    pub dd_width: f64,
    pub model_width: f64,
    pub mc_width: f64,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReachResponse {
    pub n_o: usize,
    pub steps: Vec<StepView>,
}

const N_O: usize = 5;
const T: usize = 50;
const RHO_MAX: usize = 200;

fn simulate(
    sys: &LtiSystem,
    noise: &NoiseSpec,
    x0: &Zonotope,
    u: &Zonotope,
    count: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, String> {
    gen_dataset(&DatasetSpec {
        system: sys,
        noise,
        x0_set: x0,
        input_set: u,
        count,
        length,
        master_seed: seed,
        keep_states: false,
    })
    .map_err(|e| e.to_string())
}

/// Data-driven and model-based output sets of the five-state reference
/// system, with Monte Carlo outputs for comparison.
pub fn reach_json(request: &str) -> Result<String, String> {
    let req: ReachRequest = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    let variant = match req.c_variant.as_str() {
        "a" => CVariant::A,
        "b" => CVariant::B,
        "c" => CVariant::C,
        other => return Err(format!("c_variant must be a, b or c, got {other:?}")),
    };
    if !(N_O + 1..=10).contains(&req.horizon) {
        return Err(format!("horizon must lie in {}..=10", N_O + 1));
    }
    if !(10..=5000).contains(&req.n_mc) {
        return Err("n_mc must lie in 10..=5000".into());
    }
    let sys = LtiSystem::default_five(variant);
    let noise = NoiseSpec::default_for(&sys);
    let x0 = Zonotope::from_box(vec![1.0; 5], &[0.1; 5]).map_err(|e| e.to_string())?;
    let u = Zonotope::from_box(vec![10.0], &[0.25]).map_err(|e| e.to_string())?;

    let ident = simulate(&sys, &noise, &x0, &u, 1, T + N_O + 1, req.seed)?;
    let lr = build_lifted(&ident, N_O).map_err(|e| e.to_string())?;
    let meps = build_noise_matzono(&noise.eps_bound, lr.t(), lr.p(), NoiseEmbedding::OutputBlock)
        .map_err(|e| e.to_string())?;
    let ms = build_model_set(&lr, &meps, DEFAULT_RANK_TOL).map_err(|e| e.to_string())?;
    let mc = simulate(
        &sys,
        &noise,
        &x0,
        &u,
        req.n_mc,
        req.horizon + 1,
        req.seed.wrapping_add(1),
    )?;
    let context = (0..N_O)
        .map(|k| pca_fit(&mc.iter().map(|t| t.outputs[k].as_slice()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let z0 = initial_lifted_set(&context, &vec![u.clone(); N_O]).map_err(|e| e.to_string())?;
    let reach =
        run_reachability(&ms, &z0, &[u.clone()], &noise.eps_bound, req.horizon, RHO_MAX).map_err(|e| e.to_string())?;
    let model =
        model_based_reach(&sys, &x0, &u, &noise.w_box, &noise.v_box, req.horizon, None).map_err(|e| e.to_string())?;

    let steps = reach
        .output_sets
        .iter()
        .map(|s| {
            Ok(StepView {
                step: s.step,
                dd: outline(&s.set)?,
                model_based: outline(&model[s.step])?,
                dd_width: s.set.mean_hull_width(),
                model_width: model[s.step].mean_hull_width(),
                mc_width: mc_hull(&mc, s.step).map_err(|e| e.to_string())?.mean_width(),
                points: mc
                    .iter()
                    .take(MAX_POINTS_SHOWN)
                    .map(|t| [t.outputs[s.step][0], t.outputs[s.step][1]])
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&ReachResponse { n_o: N_O, steps }).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn reduce_zonotope(request: &str) -> Result<String, JsError> {
    js(reduce_json(request))
}

#[wasm_bindgen]
pub fn conformal_quantile(request: &str) -> Result<String, JsError> {
    js(quantile_json(request))
}

#[wasm_bindgen]
pub fn reach_sets(request: &str) -> Result<String, JsError> {
    js(reach_json(request))
}
