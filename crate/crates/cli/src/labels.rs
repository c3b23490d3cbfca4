//! Training labels consumed by the offline trainer.
//!
//! Each sample draws its own initial-state center from `x0_set`, simulates
//! trajectories from a shrunken box around it, fits the first `n_o` output
//! sets, propagates them through the shared model set and tightens the
//! result with per-step strips from the same trajectories. Every set is
//! stored with exactly `k_g` generators, the layout the tokenizer expects.

use rand::Rng;
use reachzono::ddreach::{initial_lifted_set, run_reachability, ModelSet};
use reachzono::fitcert::{directional_contract, pca_fit, strip_cert_per_step};
use reachzono::seeds;
use reachzono::setalg::Zonotope;
use reachzono::sysim::{gen_dataset, DatasetSpec, Trajectory};
use reachzono::Result;
use serde::{Deserialize, Serialize};

use crate::config::Experiment;

pub const LABEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    /// Fitted from simulated outputs; steps `0..n_o`.
    Context,
    /// Certificate-tightened data-driven set; steps `n_o..=horizon`.
    Tightened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub step: usize,
    pub kind: LabelKind,
    #[serde(flatten)]
    pub set: Zonotope,
    /// Per-generator contraction factors before reduction (tightened sets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSample {
    pub index: usize,
    pub seed: u64,
    pub x0_center: Vec<f64>,
    pub sets: Vec<LabelSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    pub version: u32,
    pub n_y: usize,
    pub n_u: usize,
    pub n_o: usize,
    pub k_g: usize,
    pub t_max: f64,
    pub horizon: usize,
    pub samples: Vec<LabelSample>,
}

impl LabelFile {
    /// Context/target windows `(steps k−n_o..k, step k)` of one sample.
    pub fn windows(&self, sample: usize) -> Vec<(Vec<&Zonotope>, &Zonotope)> {
        let sets = &self.samples[sample].sets;
        (self.n_o..sets.len())
            .map(|k| (sets[k - self.n_o..k].iter().map(|s| &s.set).collect(), &sets[k].set))
            .collect()
    }
}

/// Output sets at steps `0..n_o` fitted from the given trajectories.
pub fn fit_context(trajs: &[Trajectory], n_o: usize) -> Result<Vec<Zonotope>> {
    (0..n_o)
        .map(|k| {
            let pts: Vec<&[f64]> = trajs.iter().map(|t| t.outputs[k].as_slice()).collect();
            pca_fit(&pts)
        })
        .collect()
}

pub fn generate_sample(exp: &Experiment, ms: &ModelSet, index: usize) -> Result<LabelSample> {
    let cfg = &exp.cfg;
    let seed = seeds::derive_tagged(exp.master_seed(), "labels", index as u64);
    let mut rng = seeds::rng(seed);
    let x0_center = cfg.x0_set.sample_member(&mut rng);
    let x0 = Zonotope::from_flat(
        x0_center.clone(),
        cfg.x0_set
            .generators_flat()
            .iter()
            .map(|g| g * cfg.labels.x0_shrink)
            .collect(),
    )?;
    let trajs = gen_dataset(&DatasetSpec {
        system: &exp.system,
        noise: &exp.noise,
        x0_set: &x0,
        input_set: &cfg.input_set,
        count: cfg.labels.m_per_sample,
        length: cfg.horizon + 1,
        master_seed: rng.gen(),
        keep_states: false,
    })?;
    let context = fit_context(&trajs, cfg.n_o)?;
    let z0 = initial_lifted_set(&context, &vec![cfg.input_set.clone(); cfg.n_o])?;
    let reach = run_reachability(
        ms,
        &z0,
        std::slice::from_ref(&cfg.input_set),
        &cfg.eps_bound,
        cfg.horizon,
        cfg.rho_max,
    )?;
    let cert = strip_cert_per_step(&trajs, cfg.horizon, cfg.labels.strip_inflation)?;

    let mut sets = Vec::with_capacity(cfg.horizon + 1);
    for (k, z) in context.iter().enumerate() {
        sets.push(LabelSet {
            step: k,
            kind: LabelKind::Context,
            set: exp.tokenizer.fit_generators(z)?,
            lambdas: None,
        });
    }
    for s in &reach.output_sets {
        let report = directional_contract(&s.set, &cert, s.step, cfg.labels.n_ray)?;
        sets.push(LabelSet {
            step: s.step,
            kind: LabelKind::Tightened,
            set: exp.tokenizer.fit_generators(&report.tightened)?,
            lambdas: Some(report.lambdas),
        });
    }
    Ok(LabelSample {
        index,
        seed,
        x0_center,
        sets,
    })
}
