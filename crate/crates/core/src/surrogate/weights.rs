//! `manifest.json` + `weights.bin` (little-endian f32, row-major, tensors
//! concatenated in table order). Linear weights are stored `[out, in]`.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub k_g: usize,
    pub n_y: usize,
    pub n_o: usize,
    /// Learned positions cover prompt plus query tokens.
    pub pos_len: usize,
    /// Only `"pre"` is supported.
    pub norm: String,
    /// Only `"gelu_tanh"` is supported.
    pub activation: String,
    pub layer_norm_eps: f64,
}

impl Architecture {
    /// d = 128, 8 heads, 4 layers, d_ff = 512.
    pub fn reference(n_y: usize, k_g: usize, n_o: usize) -> Self {
        Self::new(128, 8, 4, 512, n_y, k_g, n_o)
    }

    pub fn new(
        d_model: usize,
        n_heads: usize,
        n_layers: usize,
        d_ff: usize,
        n_y: usize,
        k_g: usize,
        n_o: usize,
    ) -> Self {
        Architecture {
            d_model,
            n_heads,
            n_layers,
            d_ff,
            k_g,
            n_y,
            n_o,
            pos_len: (n_o + 1) * (1 + k_g),
            norm: "pre".into(),
            activation: "gelu_tanh".into(),
            layer_norm_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Weights(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_y == 0 || self.n_o == 0 || self.d_ff == 0 {
            return bad("n_y, n_o and d_ff must be positive".into());
        }
        if self.pos_len < (self.n_o + 1) * (1 + self.k_g) {
            return bad(format!(
                "pos_len {} shorter than prompt plus query ({})",
                self.pos_len,
                (self.n_o + 1) * (1 + self.k_g)
            ));
        }
        if self.norm != "pre" {
            return bad(format!("unsupported norm placement '{}'", self.norm));
        }
        if self.activation != "gelu_tanh" {
            return bad(format!("unsupported activation '{}'", self.activation));
        }
        Ok(())
    }

    /// Every tensor name and shape, in file order.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let (d, f) = (self.d_model, self.d_ff);
        let mut specs = vec![
            ("embed.weight".to_string(), vec![d, self.n_y + 1]),
            ("embed.bias".to_string(), vec![d]),
            ("pos_embed".to_string(), vec![self.pos_len, d]),
            ("query_tokens".to_string(), vec![1 + self.k_g, d]),
        ];
        for l in 0..self.n_layers {
            let p = format!("layers.{l}");
            specs.push((format!("{p}.ln1.weight"), vec![d]));
            specs.push((format!("{p}.ln1.bias"), vec![d]));
            for proj in ["q_proj", "k_proj", "v_proj", "out_proj"] {
                specs.push((format!("{p}.attn.{proj}.weight"), vec![d, d]));
                specs.push((format!("{p}.attn.{proj}.bias"), vec![d]));
            }
            specs.push((format!("{p}.ln2.weight"), vec![d]));
            specs.push((format!("{p}.ln2.bias"), vec![d]));
            specs.push((format!("{p}.ff.fc1.weight"), vec![f, d]));
            specs.push((format!("{p}.ff.fc1.bias"), vec![f]));
            specs.push((format!("{p}.ff.fc2.weight"), vec![d, f]));
            specs.push((format!("{p}.ff.fc2.bias"), vec![d]));
        }
        specs.push(("final_ln.weight".into(), vec![d]));
        specs.push(("final_ln.bias".into(), vec![d]));
        specs.push(("head.weight".into(), vec![self.n_y, d]));
        specs.push(("head.bias".into(), vec![self.n_y]));
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `weights.bin`.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub architecture: Architecture,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub manifest: Manifest,
    /// One flat f32 buffer per tensor, in table order.
    pub data: Vec<Vec<f32>>,
}

impl WeightBundle {
    /// Builds the tensor table for `arch`, taking values from `fill`.
    fn build(arch: Architecture, mut fill: impl FnMut(&str, &[usize]) -> Vec<f32>) -> Result<Self> {
        arch.validate()?;
        let mut offset = 0u64;
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        for (name, shape) in arch.tensor_specs() {
            let values = fill(&name, &shape);
            tensors.push(TensorEntry { name, shape, offset });
            offset += 4 * values.len() as u64;
            data.push(values);
        }
        Ok(WeightBundle {
            manifest: Manifest {
                version: FORMAT_VERSION,
                architecture: arch,
                tensors,
            },
            data,
        })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        Self::build(arch, |_, shape| vec![0.0; shape.iter().product()])
    }

    /// Seeded initialization: linear weights uniform in `±1/√fan_in`,
    /// biases zero, layer-norm gains one, embeddings `N(0, 0.02²)`-scaled
    /// uniforms.
    pub fn random(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = seeds::rng(seed);
        Self::build(arch, |name, shape| {
            let n: usize = shape.iter().product();
            if name.contains("ln") && name.ends_with(".weight") {
                vec![1.0; n]
            } else if name.ends_with(".bias") {
                vec![0.0; n]
            } else if name == "pos_embed" || name == "query_tokens" {
                (0..n).map(|_| rng.gen_range(-0.035f32..0.035)).collect()
            } else {
                let bound = 1.0 / (shape[1] as f32).sqrt();
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            }
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.manifest.architecture
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f32])> {
        self.manifest
            .tensors
            .iter()
            .position(|t| t.name == name)
            .map(|i| (self.manifest.tensors[i].shape.as_slice(), self.data[i].as_slice()))
            .ok_or_else(|| Error::Weights(format!("missing tensor '{name}'")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut [f32]> {
        let i = self
            .manifest
            .tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Weights(format!("missing tensor '{name}'")))?;
        Ok(&mut self.data[i])
    }

    /// Checks that the table matches the architecture exactly, with
    /// contiguous offsets.
    pub fn validate(&self) -> Result<()> {
        let arch = &self.manifest.architecture;
        arch.validate()?;
        if self.manifest.version != FORMAT_VERSION {
            return Err(Error::Weights(format!(
                "unsupported format version {}",
                self.manifest.version
            )));
        }
        let specs = arch.tensor_specs();
        if specs.len() != self.manifest.tensors.len() || self.data.len() != specs.len() {
            return Err(Error::Weights(format!(
                "expected {} tensors, manifest lists {}",
                specs.len(),
                self.manifest.tensors.len()
            )));
        }
        let mut offset = 0u64;
        for ((name, shape), (entry, values)) in specs.iter().zip(self.manifest.tensors.iter().zip(&self.data)) {
            if &entry.name != name || &entry.shape != shape {
                return Err(Error::Weights(format!(
                    "tensor '{}' {:?} does not match expected '{}' {:?}",
                    entry.name, entry.shape, name, shape
                )));
            }
            if entry.offset != offset {
                return Err(Error::Weights(format!(
                    "tensor '{name}' at offset {} (expected {offset})",
                    entry.offset
                )));
            }
            if values.len() != shape.iter().product::<usize>() {
                return Err(Error::Weights(format!("tensor '{name}' has {} values", values.len())));
            }
            offset += 4 * values.len() as u64;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().flatten().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn manifest_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.manifest)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_parts(manifest: Manifest, bytes: &[u8]) -> Result<Self> {
        let mut data = Vec::with_capacity(manifest.tensors.len());
        for t in &manifest.tensors {
            let n: usize = t.shape.iter().product();
            let start = usize::try_from(t.offset).map_err(|_| Error::Weights("offset overflow".into()))?;
            let end = start + 4 * n;
            let slice = bytes.get(start..end).ok_or_else(|| {
                Error::Weights(format!(
                    "tensor '{}' runs past end of weights ({} bytes)",
                    t.name,
                    bytes.len()
                ))
            })?;
            data.push(
                slice
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            );
        }
        let wb = WeightBundle { manifest, data };
        wb.validate()?;
        let expected: usize = wb.data.iter().map(Vec::len).sum::<usize>() * 4;
        if bytes.len() != expected {
            return Err(Error::Weights(format!(
                "weights file has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        Ok(wb)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json()?)?;
        fs::write(dir.join(WEIGHTS_FILE), self.to_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let bytes = fs::read(dir.join(WEIGHTS_FILE))?;
        Self::from_parts(manifest, &bytes)
    }
}
