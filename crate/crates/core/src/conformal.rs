//! Split conformal calibration of predicted zonotopes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setalg::{Zonotope, MEMBERSHIP_TOL};
use crate::surrogate::{autoregress_with, Prediction, TokenizerConfig, Transformer};
use crate::sysim::Trajectory;

/// Slack added to a quantile when testing containment.
pub const COVERAGE_TOL: f64 = 1e-9;

/// Minimal ℓ∞ inflation of `yhat` that contains `y`.
pub fn score(yhat: &Zonotope, y: &[f64]) -> Result<f64> {
    yhat.inflation_score(y)
}

/// The `⌈(n+1)(1−δ)⌉`-th smallest score, or `+∞` when that index exceeds
/// `n`.
pub fn quantile(scores: &[f64], delta: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("quantile of an empty score list"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("score {bad} is not a number")));
    }
    let n = scores.len();
    let rank = quantile_rank(n, delta);
    if rank > n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank.max(1) - 1])
}

/// 1-based order statistic used by [`quantile`]. The small offset absorbs
/// rounding in products like `201 · 0.95`.
pub fn quantile_rank(n: usize, delta: f64) -> usize {
    (((n + 1) as f64) * (1.0 - delta) - 1e-9).ceil().max(0.0) as usize
}

/// `yhat ⊕ ⟨0, q·I⟩`.
pub fn inflate(yhat: &Zonotope, q: f64) -> Result<Zonotope> {
    if q.is_infinite() {
        return Err(Error::InvalidArgument(
            "infinite quantile: add calibration trajectories before inflating".into(),
        ));
    }
    if !(q >= 0.0) {
        return Err(Error::InvalidArgument(format!("inflation radius must be ≥ 0, got {q}")));
    }
    if q == 0.0 {
        return Ok(yhat.clone());
    }
    yhat.minkowski_sum(&Zonotope::from_box(vec![0.0; yhat.dim()], &vec![q; yhat.dim()])?)
}

/// Scores per (trial, step) plus per-trial maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub steps: Vec<usize>,
    pub trial_seeds: Vec<u64>,
    /// `scores[i][j]` is trial `i` at `steps[j]`.
    pub scores: Vec<Vec<f64>>,
    pub maxima: Vec<f64>,
}

impl ScoreMatrix {
    pub fn n_trials(&self) -> usize {
        self.scores.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.scores.iter().map(|row| row[j]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("trial,step,score\n");
        for (i, row) in self.scores.iter().enumerate() {
            for (step, v) in self.steps.iter().zip(row) {
                s.push_str(&format!("{i},{step},{v:e}\n"));
            }
        }
        s
    }

    fn from_rows(steps: Vec<usize>, trial_seeds: Vec<u64>, scores: Vec<Vec<f64>>) -> Self {
        let maxima = scores.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
        ScoreMatrix {
            steps,
            trial_seeds,
            scores,
            maxima,
        }
    }
}

/// Scores every trajectory against its predictions. `predictions` holds one
/// rollout shared by all trials, or one rollout per trial.
pub fn score_matrix<P: AsRef<[Prediction]>>(predictions: &[P], trajs: &[Trajectory]) -> Result<ScoreMatrix> {
    if predictions.len() != 1 && predictions.len() != trajs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} prediction rollouts for {} trials",
            predictions.len(),
            trajs.len()
        )));
    }
    let steps: Vec<usize> = predictions
        .first()
        .map(|p| p.as_ref().iter().map(|q| q.step).collect())
        .unwrap_or_default();
    let mut rows = Vec::with_capacity(trajs.len());
    for (i, t) in trajs.iter().enumerate() {
        let preds = predictions[if predictions.len() == 1 { 0 } else { i }].as_ref();
        if preds.iter().map(|p| p.step).ne(steps.iter().copied()) {
            return Err(Error::InvalidArgument(format!(
                "trial {i} predicts a different set of steps"
            )));
        }
        let row = preds
            .iter()
            .map(|p| {
                let y = t.outputs.get(p.step).ok_or(Error::IndexOutOfRange {
                    op: "score_matrix",
                    index: p.step,
                    dim: t.len(),
                })?;
                score(&p.set, y)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(ScoreMatrix::from_rows(
        steps,
        trajs.iter().map(|t| t.seed).collect(),
        rows,
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    #[default]
    PerStep,
    Joint,
}

/// Per-step quantiles and the trajectory-level quantile. Infinite values
/// are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "QuantileTableRepr", into = "QuantileTableRepr")]
pub struct QuantileTable {
    pub delta: f64,
    pub n_cal: usize,
    pub per_step: BTreeMap<usize, f64>,
    pub joint: f64,
}

#[derive(Serialize, Deserialize)]
struct QuantileTableRepr {
    delta: f64,
    n_cal: u64,
    per_step: BTreeMap<usize, Option<f64>>,
    joint: Option<f64>,
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<QuantileTable> for QuantileTableRepr {
    fn from(t: QuantileTable) -> Self {
        QuantileTableRepr {
            delta: t.delta,
            n_cal: t.n_cal as u64,
            per_step: t.per_step.into_iter().map(|(k, v)| (k, finite_or_none(v))).collect(),
            joint: finite_or_none(t.joint),
        }
    }
}

impl From<QuantileTableRepr> for QuantileTable {
    fn from(r: QuantileTableRepr) -> Self {
        QuantileTable {
            delta: r.delta,
            n_cal: r.n_cal as usize,
            per_step: r
                .per_step
                .into_iter()
                .map(|(k, v)| (k, v.unwrap_or(f64::INFINITY)))
                .collect(),
            joint: r.joint.unwrap_or(f64::INFINITY),
        }
    }
}

impl QuantileTable {
    pub fn from_scores(m: &ScoreMatrix, delta: f64) -> Result<Self> {
        if m.n_trials() == 0 {
            return Err(Error::EmptyInput("no calibration trials"));
        }
        let per_step = m
            .steps
            .iter()
            .enumerate()
            .map(|(j, &k)| Ok((k, quantile(&m.column(j), delta)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(QuantileTable {
            delta,
            n_cal: m.n_trials(),
            per_step,
            joint: quantile(&m.maxima, delta)?,
        })
    }

    pub fn q(&self, step: usize, mode: CalibrationMode) -> Result<f64> {
        match mode {
            CalibrationMode::Joint => Ok(self.joint),
            CalibrationMode::PerStep => self.per_step.get(&step).copied().ok_or(Error::IndexOutOfRange {
                op: "QuantileTable::q",
                index: step,
                dim: self.per_step.len(),
            }),
        }
    }

    pub fn inflate(&self, yhat: &Zonotope, step: usize, mode: CalibrationMode) -> Result<Zonotope> {
        let q = self.q(step, mode)?;
        if q.is_infinite() {
            return Err(Error::InfiniteQuantile {
                n_cal: self.n_cal,
                delta: self.delta,
            });
        }
        inflate(yhat, q)
    }
}

/// Scores and quantiles from calibration predictions and realized outputs.
pub fn calibrate<P: AsRef<[Prediction]>>(
    predictions: &[P],
    trajs: &[Trajectory],
    delta: f64,
) -> Result<(ScoreMatrix, QuantileTable)> {
    let m = score_matrix(predictions, trajs)?;
    let table = QuantileTable::from_scores(&m, delta)?;
    Ok((m, table))
}

/// Rollout where each prediction is inflated before it is fed back. The
/// step-`k` quantile is fixed from calibration scores at step `k` before the
/// inflated set enters the context.
pub fn calibrate_with_inflated_feedback(
    model: &Transformer,
    init_context: &[Zonotope],
    horizon: usize,
    cfg: &TokenizerConfig,
    cal: &[Trajectory],
    delta: f64,
    mode: CalibrationMode,
) -> Result<(Vec<Prediction>, ScoreMatrix, QuantileTable)> {
    if mode == CalibrationMode::Joint {
        return Err(Error::InvalidArgument(
            "inflated feedback needs per-step quantiles; the joint quantile is only known after the rollout".into(),
        ));
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut per_step = BTreeMap::new();
    let preds = autoregress_with(model, init_context, horizon, cfg, |k, pred| {
        let col = cal
            .iter()
            .map(|t| {
                let y = t.outputs.get(k).ok_or(Error::IndexOutOfRange {
                    op: "calibrate",
                    index: k,
                    dim: t.len(),
                })?;
                score(pred, y)
            })
            .collect::<Result<Vec<_>>>()?;
        let q = quantile(&col, delta)?;
        columns.push(col);
        per_step.insert(k, q);
        if q.is_infinite() {
            return Err(Error::InfiniteQuantile {
                n_cal: cal.len(),
                delta,
            });
        }
        inflate(pred, q)
    })?;
    let rows: Vec<Vec<f64>> = (0..cal.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    let m = ScoreMatrix::from_rows(
        preds.iter().map(|p| p.step).collect(),
        cal.iter().map(|t| t.seed).collect(),
        rows,
    );
    let joint = quantile(&m.maxima, delta)?;
    Ok((
        preds,
        m,
        QuantileTable {
            delta,
            n_cal: cal.len(),
            per_step,
            joint,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub mode: CalibrationMode,
    pub n_test: usize,
    /// Fraction of trials with `score ≤ q + tol` at each step.
    pub per_step: BTreeMap<usize, f64>,
    /// Fraction of trials contained at every step simultaneously.
    pub joint: f64,
}

impl CoverageReport {
    pub fn min_per_step(&self) -> f64 {
        self.per_step.values().copied().fold(1.0, f64::min)
    }
}

/// Empirical coverage of test scores under the table's quantiles.
pub fn coverage_eval(test: &ScoreMatrix, table: &QuantileTable, mode: CalibrationMode) -> Result<CoverageReport> {
    let n = test.n_trials();
    if n == 0 {
        return Err(Error::EmptyInput("no test trials"));
    }
    let qs = test
        .steps
        .iter()
        .map(|&k| table.q(k, mode))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = vec![0usize; qs.len()];
    let mut all = 0usize;
    for row in &test.scores {
        let mut every = true;
        for (j, (s, q)) in row.iter().zip(&qs).enumerate() {
            if *s <= q + COVERAGE_TOL {
                hits[j] += 1;
            } else {
                every = false;
            }
        }
        all += every as usize;
    }
    Ok(CoverageReport {
        mode,
        n_test: n,
        per_step: test
            .steps
            .iter()
            .zip(&hits)
            .map(|(&k, &h)| (k, h as f64 / n as f64))
            .collect(),
        joint: all as f64 / n as f64,
    })
}

/// A trajectory is kept iff each of its first `context.len()` outputs lies
/// in the matching context zonotope. Returns the kept trajectories and the
/// indices of the rejected ones.
pub fn filter_trajectories(trajs: &[Trajectory], context: &[Zonotope]) -> Result<(Vec<Trajectory>, Vec<usize>)> {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (i, t) in trajs.iter().enumerate() {
        if is_retained(t, context)? {
            kept.push(t.clone());
        } else {
            rejected.push(i);
        }
    }
    Ok((kept, rejected))
}

pub fn is_retained(t: &Trajectory, context: &[Zonotope]) -> Result<bool> {
    if t.len() < context.len() {
        return Ok(false);
    }
    for (z, y) in context.iter().zip(&t.outputs) {
        if z.inflation_score(y)? > MEMBERSHIP_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}
