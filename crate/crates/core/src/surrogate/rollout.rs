use serde::{Deserialize, Serialize};

use super::model::Transformer;
use super::tokens::{detokenize, tokenize, TokenizerConfig};
use crate::error::{Error, Result};
use crate::setalg::Zonotope;

/// What is written back into the context after each prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    #[default]
    Raw,
    Inflated,
}

impl std::str::FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FeedbackMode::Raw),
            "inflated" => Ok(FeedbackMode::Inflated),
            other => Err(Error::InvalidArgument(format!("unknown feedback mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextInit {
    /// Fitted zonotopes as they are.
    #[default]
    Fitted,
    /// Only the fitted centers, with zero generators.
    Centers,
}

pub fn init_context(fitted: &[Zonotope], mode: ContextInit) -> Result<Vec<Zonotope>> {
    match mode {
        ContextInit::Fitted => Ok(fitted.to_vec()),
        ContextInit::Centers => fitted.iter().map(|z| Zonotope::point(z.center().to_vec())).collect(),
    }
}

/// Predicted set for step `steps.last() + 1`, with exactly `k_g` generators.
pub fn predict_next(
    model: &Transformer,
    context: &[Zonotope],
    steps: &[usize],
    cfg: &TokenizerConfig,
) -> Result<Zonotope> {
    let arch = model.architecture();
    if arch.n_y != cfg.n_y || arch.k_g != cfg.k_g || arch.n_o != cfg.n_o {
        return Err(Error::Weights(format!(
            "weights built for n_y={}, k_g={}, n_o={} but tokenizer has n_y={}, k_g={}, n_o={}",
            arch.n_y, arch.k_g, arch.n_o, cfg.n_y, cfg.k_g, cfg.n_o
        )));
    }
    if context.len() != cfg.n_o {
        return Err(Error::InvalidArgument(format!(
            "context of {} zonotopes (expected {})",
            context.len(),
            cfg.n_o
        )));
    }
    let seq = tokenize(context, steps, cfg)?;
    let out = model.forward(&seq.tokens)?;
    detokenize(&out, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub step: usize,
    #[serde(flatten)]
    pub set: Zonotope,
}

/// Rolls out predictions for steps `n_o ..= horizon`, starting from a context
/// covering steps `0 .. n_o`. `feedback(step, prediction)` returns the set
/// that replaces the oldest context element.
pub fn autoregress_with(
    model: &Transformer,
    init_context: &[Zonotope],
    horizon: usize,
    cfg: &TokenizerConfig,
    mut feedback: impl FnMut(usize, &Zonotope) -> Result<Zonotope>,
) -> Result<Vec<Prediction>> {
    if init_context.len() != cfg.n_o {
        return Err(Error::InvalidArgument(format!(
            "initial context of {} zonotopes (expected {})",
            init_context.len(),
            cfg.n_o
        )));
    }
    if horizon < cfg.n_o {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is below n_o = {}",
            cfg.n_o
        )));
    }
    let mut context = init_context.to_vec();
    let mut out = Vec::with_capacity(horizon + 1 - cfg.n_o);
    for k in cfg.n_o..=horizon {
        let steps: Vec<usize> = (k - cfg.n_o..k).collect();
        let pred = predict_next(model, &context, &steps, cfg)?;
        if !pred.is_finite() {
            return Err(Error::NonFinite { step: k });
        }
        let next = feedback(k, &pred)?;
        context.remove(0);
        context.push(next);
        out.push(Prediction { step: k, set: pred });
    }
    Ok(out)
}

/// Raw feedback: each prediction is fed back unchanged.
pub fn autoregress(
    model: &Transformer,
    init_context: &[Zonotope],
    horizon: usize,
    cfg: &TokenizerConfig,
) -> Result<Vec<Prediction>> {
    autoregress_with(model, init_context, horizon, cfg, |_, z| Ok(z.clone()))
}
