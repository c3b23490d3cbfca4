//! Pipeline stages. Each reads upstream artifacts, writes its own, and
//! records a run manifest.

use std::collections::BTreeMap;

use reachzono::conformal::{
    calibrate, calibrate_with_inflated_feedback, coverage_eval, filter_trajectories, score_matrix, CalibrationMode,
    CoverageReport, QuantileTable,
};
use reachzono::ddreach::{
    build_lifted, build_model_set, build_noise_matzono, initial_lifted_set, run_reachability, ModelSet, StepSet,
};
use reachzono::fitcert::{directional_contract, strip_cert_per_step, ContractionReport};
use reachzono::seeds;
use reachzono::setalg::{Zonotope, MEMBERSHIP_TOL};
use reachzono::surrogate::{
    autoregress, init_context, FeedbackMode, Manifest, Prediction, Transformer, WeightBundle, MANIFEST_FILE,
    WEIGHTS_FILE,
};
use reachzono::sysim::{gen_dataset, mc_hull, model_based_reach, DatasetSpec, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::error::{CliError, CliResult};
use crate::labels::{fit_context, generate_sample, LabelFile, LABEL_FORMAT_VERSION};
use crate::report::{interval_svg, step_svg, table_csv, Layer, TableRow};
use crate::store::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Simulate,
    BuildModel,
    FitContext,
    Propagate,
    Tighten,
    GenLabels,
    InitWeights,
    Predict,
    Calibrate,
    Evaluate,
    Report,
}

impl Stage {
    /// Execution order of `all`.
    pub const PIPELINE: [Stage; 11] = [
        Stage::Simulate,
        Stage::BuildModel,
        Stage::FitContext,
        Stage::Propagate,
        Stage::Tighten,
        Stage::GenLabels,
        Stage::InitWeights,
        Stage::Predict,
        Stage::Calibrate,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::BuildModel => "build-model",
            Stage::FitContext => "fit-context",
            Stage::Propagate => "propagate",
            Stage::Tighten => "tighten",
            Stage::GenLabels => "gen-labels",
            Stage::InitWeights => "init-weights",
            Stage::Predict => "predict",
            Stage::Calibrate => "calibrate",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

pub fn run_stage(exp: &Experiment, stage: Stage) -> CliResult<RunManifest> {
    let mut st = Store::new(exp, stage.name());
    match stage {
        Stage::Simulate => simulate(exp, &mut st)?,
        Stage::BuildModel => build_model(exp, &mut st)?,
        Stage::FitContext => fit_context_stage(exp, &mut st)?,
        Stage::Propagate => propagate(exp, &mut st)?,
        Stage::Tighten => tighten(exp, &mut st)?,
        Stage::GenLabels => gen_labels(exp, &mut st)?,
        Stage::InitWeights => init_weights(exp, &mut st)?,
        Stage::Predict => predict(exp, &mut st)?,
        Stage::Calibrate => calibrate_stage(exp, &mut st)?,
        Stage::Evaluate => evaluate(exp, &mut st)?,
        Stage::Report => report(exp, &mut st)?,
    }
    st.finish()
}

pub fn run_all(exp: &Experiment) -> CliResult<Vec<RunManifest>> {
    Stage::PIPELINE.iter().map(|s| run_stage(exp, *s)).collect()
}

fn simulate(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let cfg = &exp.cfg;
    let draw = |tag: &str, count: usize, length: usize| {
        gen_dataset(&DatasetSpec {
            system: &exp.system,
            noise: &exp.noise,
            x0_set: &cfg.x0_set,
            input_set: &cfg.input_set,
            count,
            length,
            master_seed: seeds::derive_tagged(exp.master_seed(), tag, 0),
            keep_states: false,
        })
        .map_err(CliError::numerical("simulate"))
    };
    let len = cfg.horizon + 1;
    st.write_jsonl(IDENTIFICATION, &draw("identification", 1, cfg.t + cfg.n_o + 1)?)?;
    st.write_jsonl(CONTEXT_DATA, &draw("context", cfg.context.m, len)?)?;
    st.write_jsonl(CALIBRATION_DATA, &draw("calibration", cfg.calibration.pool, len)?)?;
    st.write_jsonl(TEST_DATA, &draw("test", cfg.evaluation.pool, len)?)?;
    st.write_jsonl(MC_DATA, &draw("mc", cfg.evaluation.n_mc, len)?)
}

fn build_model(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let num = CliError::numerical("build-model");
    let ident: Vec<Trajectory> = st.read_jsonl(IDENTIFICATION)?;
    let lr = build_lifted(&ident, exp.cfg.n_o).map_err(&num)?;
    let meps = build_noise_matzono(&exp.cfg.eps_bound, lr.t(), lr.p(), exp.cfg.noise_embedding).map_err(&num)?;
    let ms = build_model_set(&lr, &meps, exp.cfg.rank_tol).map_err(&num)?;
    st.write_json(MODEL_SET, &ms)
}

fn fit_context_stage(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let trajs: Vec<Trajectory> = st.read_jsonl(CONTEXT_DATA)?;
    let sets = fit_context(&trajs, exp.cfg.n_o).map_err(CliError::numerical("fit-context"))?;
    let records: Vec<StepSet> = sets
        .into_iter()
        .enumerate()
        .map(|(step, set)| StepSet { step, set })
        .collect();
    st.write_json(CONTEXT_SETS, &records)
}

fn read_sets(st: &mut Store<'_>, rel: &str) -> CliResult<Vec<StepSet>> {
    st.read_json(rel)
}

fn propagate(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let num = CliError::numerical("propagate");
    let cfg = &exp.cfg;
    let ms: ModelSet = st.read_json(MODEL_SET)?;
    let context: Vec<Zonotope> = read_sets(st, CONTEXT_SETS)?.into_iter().map(|s| s.set).collect();
    let z0 = initial_lifted_set(&context, &vec![cfg.input_set.clone(); cfg.n_o]).map_err(&num)?;
    let reach = run_reachability(
        &ms,
        &z0,
        std::slice::from_ref(&cfg.input_set),
        &cfg.eps_bound,
        cfg.horizon,
        cfg.rho_max,
    )
    .map_err(&num)?;
    st.write_json(DD_SETS, &reach.output_sets)?;
    let model = model_based_reach(
        &exp.system,
        &cfg.x0_set,
        &cfg.input_set,
        &exp.noise.w_box,
        &exp.noise.v_box,
        cfg.horizon,
        None,
    )
    .map_err(&num)?;
    let model: Vec<StepSet> = model
        .into_iter()
        .enumerate()
        .map(|(step, set)| StepSet { step, set })
        .collect();
    st.write_json(MODEL_BASED_SETS, &model)
}

fn tighten(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let cfg = &exp.cfg;
    let dd = read_sets(st, DD_SETS)?;
    let history: Vec<Trajectory> = st.read_jsonl(CONTEXT_DATA)?;
    let cert = strip_cert_per_step(&history, cfg.horizon, cfg.labels.strip_inflation)
        .map_err(CliError::numerical("tighten"))?;
    let reports = dd
        .iter()
        .map(|s| {
            directional_contract(&s.set, &cert, s.step, cfg.labels.n_ray).map_err(CliError::at_step("tighten", s.step))
        })
        .collect::<CliResult<Vec<ContractionReport>>>()?;
    st.write_json(TIGHTENED, &reports)
}

fn gen_labels(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let ms: ModelSet = st.read_json(MODEL_SET)?;
    let samples = (0..exp.cfg.labels.n_s)
        .map(|i| generate_sample(exp, &ms, i).map_err(CliError::numerical("gen-labels")))
        .collect::<CliResult<Vec<_>>>()?;
    let file = LabelFile {
        version: LABEL_FORMAT_VERSION,
        n_y: exp.system.ny(),
        n_u: exp.system.nu(),
        n_o: exp.cfg.n_o,
        k_g: exp.tokenizer.k_g,
        t_max: exp.tokenizer.t_max,
        horizon: exp.cfg.horizon,
        samples,
    };
    st.write_json(LABELS, &file)
}

fn init_weights(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    if exp.weights_dir.is_some() {
        load_model(exp, st)?;
        return Ok(());
    }
    let wb = WeightBundle::random(exp.architecture.clone(), exp.cfg.surrogate.init_seed)
        .map_err(|e| CliError::config("surrogate", e.to_string()))?;
    let manifest = wb.manifest_json().map_err(CliError::numerical("init-weights"))?;
    st.write_bytes(&format!("{WEIGHTS_DIR}/{MANIFEST_FILE}"), manifest.as_bytes())?;
    st.write_bytes(&format!("{WEIGHTS_DIR}/{WEIGHTS_FILE}"), &wb.to_bytes())
}

fn load_model(exp: &Experiment, st: &mut Store<'_>) -> CliResult<Transformer> {
    let (manifest_bytes, weights) = match &exp.weights_dir {
        Some(dir) => (
            st.read_external(&dir.join(MANIFEST_FILE))?,
            st.read_external(&dir.join(WEIGHTS_FILE))?,
        ),
        None => (
            st.read_bytes(&format!("{WEIGHTS_DIR}/{MANIFEST_FILE}"))?,
            st.read_bytes(&format!("{WEIGHTS_DIR}/{WEIGHTS_FILE}"))?,
        ),
    };
    let bad = |e: String| CliError::config("surrogate.weights", e);
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes).map_err(|e| bad(e.to_string()))?;
    let wb = WeightBundle::from_parts(manifest, &weights).map_err(|e| bad(e.to_string()))?;
    let a = wb.architecture();
    let t = &exp.tokenizer;
    if (a.n_y, a.k_g, a.n_o) != (t.n_y, t.k_g, t.n_o) {
        return Err(bad(format!(
            "bundle built for n_y={}, k_g={}, n_o={} but the experiment has n_y={}, k_g={}, n_o={}",
            a.n_y, a.k_g, a.n_o, t.n_y, t.k_g, t.n_o
        )));
    }
    Transformer::from_bundle(&wb).map_err(|e| bad(e.to_string()))
}

/// Which trajectories survived the context filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub pool: usize,
    pub retained: usize,
    pub used: usize,
    pub rejected: Vec<usize>,
}

fn retained_subset(
    trajs: &[Trajectory],
    fitted: &[Zonotope],
    need: usize,
    field: &str,
    stage: &'static str,
) -> CliResult<(Vec<Trajectory>, FilterSummary)> {
    let (mut kept, rejected) = filter_trajectories(trajs, fitted).map_err(CliError::numerical(stage))?;
    if kept.len() < need {
        return Err(CliError::config(
            field,
            format!(
                "only {} of {} trajectories fall inside the fitted context sets; {need} are needed",
                kept.len(),
                trajs.len()
            ),
        ));
    }
    let retained = kept.len();
    kept.truncate(need);
    Ok((
        kept,
        FilterSummary {
            pool: trajs.len(),
            retained,
            used: need,
            rejected,
        },
    ))
}

fn calibration_set(
    exp: &Experiment,
    st: &mut Store<'_>,
    fitted: &[Zonotope],
    stage: &'static str,
) -> CliResult<(Vec<Trajectory>, FilterSummary)> {
    let pool: Vec<Trajectory> = st.read_jsonl(CALIBRATION_DATA)?;
    retained_subset(&pool, fitted, exp.cfg.calibration.n_cal, "calibration.pool", stage)
}

fn predict(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let cfg = &exp.cfg;
    let model = load_model(exp, st)?;
    let fitted: Vec<Zonotope> = read_sets(st, CONTEXT_SETS)?.into_iter().map(|s| s.set).collect();
    let num = CliError::numerical("predict");
    let ctx = init_context(&fitted, cfg.surrogate.context_init).map_err(&num)?;
    let preds = match cfg.surrogate.feedback {
        FeedbackMode::Raw => autoregress(&model, &ctx, cfg.horizon, &exp.tokenizer).map_err(&num)?,
        FeedbackMode::Inflated => {
            let (cal, _) = calibration_set(exp, st, &fitted, "predict")?;
            calibrate_with_inflated_feedback(
                &model,
                &ctx,
                cfg.horizon,
                &exp.tokenizer,
                &cal,
                cfg.calibration.delta,
                CalibrationMode::PerStep,
            )
            .map_err(&num)?
            .0
        }
    };
    st.write_json(PREDICTIONS, &preds)
}

/// Calibrated sets under both quantile modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedSets {
    pub per_step: Vec<Prediction>,
    pub joint: Vec<Prediction>,
}

fn calibrate_stage(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let preds: Vec<Prediction> = st.read_json(PREDICTIONS)?;
    let fitted: Vec<Zonotope> = read_sets(st, CONTEXT_SETS)?.into_iter().map(|s| s.set).collect();
    let (cal, summary) = calibration_set(exp, st, &fitted, "calibrate")?;
    let (scores, table) =
        calibrate(&[&preds], &cal, exp.cfg.calibration.delta).map_err(CliError::numerical("calibrate"))?;
    let inflate_all = |mode| {
        preds
            .iter()
            .map(|p| {
                let set = table
                    .inflate(&p.set, p.step, mode)
                    .map_err(CliError::at_step("calibrate", p.step))?;
                Ok(Prediction { step: p.step, set })
            })
            .collect::<CliResult<Vec<_>>>()
    };
    let calibrated = CalibratedSets {
        per_step: inflate_all(CalibrationMode::PerStep)?,
        joint: inflate_all(CalibrationMode::Joint)?,
    };
    st.write_bytes(CAL_SCORES, scores.to_csv().as_bytes())?;
    st.write_json(QUANTILES, &table)?;
    st.write_json(CAL_FILTER, &summary)?;
    st.write_json(CALIBRATED, &calibrated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub filter: FilterSummary,
    pub per_step_mode: CoverageReport,
    pub joint_mode: CoverageReport,
    /// Fraction of test outputs inside the data-driven set at each step.
    pub dd_containment: BTreeMap<usize, f64>,
}

fn evaluate(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let num = CliError::numerical("evaluate");
    let preds: Vec<Prediction> = st.read_json(PREDICTIONS)?;
    let table: QuantileTable = st.read_json(QUANTILES)?;
    let fitted: Vec<Zonotope> = read_sets(st, CONTEXT_SETS)?.into_iter().map(|s| s.set).collect();
    let dd = read_sets(st, DD_SETS)?;
    let pool: Vec<Trajectory> = st.read_jsonl(TEST_DATA)?;
    let (test, filter) = retained_subset(&pool, &fitted, exp.cfg.evaluation.n_test, "evaluation.pool", "evaluate")?;
    let scores = score_matrix(&[&preds], &test).map_err(&num)?;
    let per_step_mode = coverage_eval(&scores, &table, CalibrationMode::PerStep).map_err(&num)?;
    let joint_mode = coverage_eval(&scores, &table, CalibrationMode::Joint).map_err(&num)?;
    let mut dd_containment = BTreeMap::new();
    for s in &dd {
        let mut inside = 0usize;
        for t in &test {
            if s.set
                .inflation_score(&t.outputs[s.step])
                .map_err(CliError::at_step("evaluate", s.step))?
                <= MEMBERSHIP_TOL
            {
                inside += 1;
            }
        }
        dd_containment.insert(s.step, inside as f64 / test.len() as f64);
    }
    st.write_bytes(TEST_SCORES, scores.to_csv().as_bytes())?;
    st.write_json(
        COVERAGE,
        &EvaluationReport {
            filter,
            per_step_mode,
            joint_mode,
            dd_containment,
        },
    )
}

fn report(exp: &Experiment, st: &mut Store<'_>) -> CliResult<()> {
    let num = CliError::numerical("report");
    let mc: Vec<Trajectory> = st.read_jsonl(MC_DATA)?;
    let model = read_sets(st, MODEL_BASED_SETS)?;
    let dd = read_sets(st, DD_SETS)?;
    let calibrated: CalibratedSets = st.read_json(CALIBRATED)?;
    let coverage: EvaluationReport = st.read_json(COVERAGE)?;
    let find = |sets: &[StepSet], k: usize| {
        sets.iter()
            .find(|s| s.step == k)
            .map(|s| s.set.clone())
            .ok_or_else(|| CliError::Malformed {
                path: st.path(DD_SETS),
                message: format!("no set for step {k}"),
            })
    };
    let mut rows = Vec::new();
    let mut svgs = Vec::new();
    let mut intervals: [Vec<_>; 3] = Default::default();
    let steps: Vec<usize> = (exp.cfg.n_o..=exp.cfg.horizon).collect();
    for &k in &steps {
        let dd_k = find(&dd, k)?;
        let model_k = find(&model, k)?;
        let tf_k = calibrated
            .per_step
            .iter()
            .find(|p| p.step == k)
            .map(|p| p.set.clone())
            .ok_or_else(|| CliError::Malformed {
                path: st.path(CALIBRATED),
                message: format!("no set for step {k}"),
            })?;
        rows.push(TableRow {
            step: k,
            mc_width: mc_hull(&mc, k).map_err(&num)?.mean_width(),
            model_width: model_k.mean_hull_width(),
            tf_q_width: tf_k.mean_hull_width(),
            dd_width: dd_k.mean_hull_width(),
            coverage: coverage.per_step_mode.per_step.get(&k).copied().unwrap_or(f64::NAN),
        });
        if exp.system.ny() >= 2 {
            let points: Vec<Vec<f64>> = mc.iter().take(500).map(|t| t.outputs[k].clone()).collect();
            let layers = [
                Layer {
                    label: "data-driven",
                    color: "#c0392b",
                    set: &dd_k,
                },
                Layer {
                    label: "model-based",
                    color: "#2471a3",
                    set: &model_k,
                },
                Layer {
                    label: "surrogate + q",
                    color: "#1e8449",
                    set: &tf_k,
                },
            ];
            svgs.push((k, step_svg(&format!("step {k}"), &layers, &points).map_err(&num)?));
        } else {
            intervals[0].push(dd_k.interval_hull());
            intervals[1].push(model_k.interval_hull());
            intervals[2].push(tf_k.interval_hull());
        }
    }
    st.write_bytes(TABLE, table_csv(&rows).as_bytes())?;
    for (k, svg) in svgs {
        st.write_bytes(&format!("{REPORT_DIR}/step_{k}.svg"), svg.as_bytes())?;
    }
    if exp.system.ny() < 2 {
        let [d, m, t] = intervals;
        let svg = interval_svg(
            "output intervals",
            &steps,
            &[
                ("data-driven", "#c0392b", d),
                ("model-based", "#2471a3", m),
                ("surrogate + q", "#1e8449", t),
            ],
        );
        st.write_bytes(&format!("{REPORT_DIR}/intervals.svg"), svg.as_bytes())?;
    }
    Ok(())
}
