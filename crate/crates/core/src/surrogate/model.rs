//! Decoder-only transformer inference in f64.
//!
//! Layout per layer (pre-norm): `x += attn(ln1(x))`, `x += fc2(gelu(fc1(ln2(x))))`.
//! The prompt tokens are embedded linearly, the learned query tokens are
//! appended as-is, positions are added to both, and the head reads the final
//! `1 + k_g` positions.

use super::weights::{Architecture, WeightBundle};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Linear {
    w: Vec<f64>,
    b: Vec<f64>,
    inp: usize,
    out: usize,
}

impl Linear {
    fn load(wb: &WeightBundle, prefix: &str) -> Result<Self> {
        let (shape, w) = wb.tensor(&format!("{prefix}.weight"))?;
        let (_, b) = wb.tensor(&format!("{prefix}.bias"))?;
        Ok(Linear {
            w: w.iter().map(|v| *v as f64).collect(),
            b: b.iter().map(|v| *v as f64).collect(),
            out: shape[0],
            inp: shape[1],
        })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out)
            .map(|o| {
                let row = &self.w[o * self.inp..(o + 1) * self.inp];
                self.b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct LayerNorm {
    g: Vec<f64>,
    b: Vec<f64>,
    eps: f64,
}

impl LayerNorm {
    fn load(wb: &WeightBundle, prefix: &str, eps: f64) -> Result<Self> {
        let (_, g) = wb.tensor(&format!("{prefix}.weight"))?;
        let (_, b) = wb.tensor(&format!("{prefix}.bias"))?;
        Ok(LayerNorm {
            g: g.iter().map(|v| *v as f64).collect(),
            b: b.iter().map(|v| *v as f64).collect(),
            eps,
        })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + self.eps).sqrt();
        x.iter()
            .zip(self.g.iter().zip(&self.b))
            .map(|(v, (g, b))| (v - mean) * inv * g + b)
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Layer {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Debug, Clone)]
pub struct Transformer {
    arch: Architecture,
    embed: Linear,
    pos: Vec<Vec<f64>>,
    pub(crate) query: Vec<Vec<f64>>,
    layers: Vec<Layer>,
    final_ln: LayerNorm,
    head: Linear,
}

fn rows_of(wb: &WeightBundle, name: &str) -> Result<Vec<Vec<f64>>> {
    let (shape, data) = wb.tensor(name)?;
    Ok(data
        .chunks_exact(shape[1])
        .map(|r| r.iter().map(|v| *v as f64).collect())
        .collect())
}

impl Transformer {
    pub fn from_bundle(wb: &WeightBundle) -> Result<Self> {
        wb.validate()?;
        let arch = wb.architecture().clone();
        let eps = arch.layer_norm_eps;
        let layers = (0..arch.n_layers)
            .map(|l| {
                let p = format!("layers.{l}");
                Ok(Layer {
                    ln1: LayerNorm::load(wb, &format!("{p}.ln1"), eps)?,
                    q: Linear::load(wb, &format!("{p}.attn.q_proj"))?,
                    k: Linear::load(wb, &format!("{p}.attn.k_proj"))?,
                    v: Linear::load(wb, &format!("{p}.attn.v_proj"))?,
                    o: Linear::load(wb, &format!("{p}.attn.out_proj"))?,
                    ln2: LayerNorm::load(wb, &format!("{p}.ln2"), eps)?,
                    fc1: Linear::load(wb, &format!("{p}.ff.fc1"))?,
                    fc2: Linear::load(wb, &format!("{p}.ff.fc2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Transformer {
            embed: Linear::load(wb, "embed")?,
            pos: rows_of(wb, "pos_embed")?,
            query: rows_of(wb, "query_tokens")?,
            layers,
            final_ln: LayerNorm::load(wb, "final_ln", eps)?,
            head: Linear::load(wb, "head")?,
            arch,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Maps `n_o(1 + k_g)` prompt tokens of width `n_y + 1` to `1 + k_g`
    /// output vectors of width `n_y`.
    pub fn forward(&self, prompt: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let a = &self.arch;
        let expected = a.n_o * (1 + a.k_g);
        if prompt.len() != expected {
            return Err(Error::Weights(format!(
                "prompt has {} tokens, architecture expects {expected}",
                prompt.len()
            )));
        }
        if let Some(t) = prompt.iter().find(|t| t.len() != a.n_y + 1) {
            return Err(Error::Weights(format!(
                "token of width {} (expected {})",
                t.len(),
                a.n_y + 1
            )));
        }
        let mut x: Vec<Vec<f64>> = prompt
            .iter()
            .map(|t| self.embed.apply(t))
            .chain(self.query.iter().cloned())
            .collect();
        for (xi, pi) in x.iter_mut().zip(&self.pos) {
            xi.iter_mut().zip(pi).for_each(|(v, p)| *v += p);
        }
        for layer in &self.layers {
            self.block(layer, &mut x);
        }
        let first = x.len() - (1 + a.k_g);
        Ok(x[first..]
            .iter()
            .map(|h| self.head.apply(&self.final_ln.apply(h)))
            .collect())
    }

    fn block(&self, layer: &Layer, x: &mut [Vec<f64>]) {
        let (d, h) = (self.arch.d_model, self.arch.n_heads);
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let normed: Vec<Vec<f64>> = x.iter().map(|r| layer.ln1.apply(r)).collect();
        let q: Vec<Vec<f64>> = normed.iter().map(|r| layer.q.apply(r)).collect();
        let k: Vec<Vec<f64>> = normed.iter().map(|r| layer.k.apply(r)).collect();
        let v: Vec<Vec<f64>> = normed.iter().map(|r| layer.v.apply(r)).collect();
        let n = x.len();
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut ctx = vec![0.0; d];
            for head in 0..h {
                let r = head * dh..(head + 1) * dh;
                let qi = &q[i][r.clone()];
                let mut max = f64::NEG_INFINITY;
                for j in 0..=i {
                    let s = scale * qi.iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum::<f64>();
                    weights[j] = s;
                    max = max.max(s);
                }
                let mut total = 0.0;
                for w in &mut weights[..=i] {
                    *w = (*w - max).exp();
                    total += *w;
                }
                for j in 0..=i {
                    let w = weights[j] / total;
                    for (c, vv) in ctx[r.clone()].iter_mut().zip(&v[j][r.clone()]) {
                        *c += w * vv;
                    }
                }
            }
            let out = layer.o.apply(&ctx);
            x[i].iter_mut().zip(out).for_each(|(a, b)| *a += b);
        }
        for xi in x.iter_mut() {
            let hidden: Vec<f64> = layer.fc1.apply(&layer.ln2.apply(xi)).into_iter().map(gelu).collect();
            let out = layer.fc2.apply(&hidden);
            xi.iter_mut().zip(out).for_each(|(a, b)| *a += b);
        }
    }
}
