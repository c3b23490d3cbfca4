use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setalg::Zonotope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub n_y: usize,
    /// Generators per zonotope.
    pub k_g: usize,
    /// Time normalization constant.
    pub t_max: f64,
    /// Context length in zonotopes.
    pub n_o: usize,
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_y == 0 || self.n_o == 0 {
            return Err(Error::InvalidArgument("tokenizer needs n_y ≥ 1 and n_o ≥ 1".into()));
        }
        if self.k_g == 0 || self.k_g % self.n_y != 0 {
            return Err(Error::InvalidArgument(format!(
                "k_g = {} must be a positive multiple of n_y = {}",
                self.k_g, self.n_y
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        Ok(())
    }

    pub fn block_len(&self) -> usize {
        1 + self.k_g
    }

    pub fn prompt_len(&self) -> usize {
        self.n_o * self.block_len()
    }

    pub fn token_dim(&self) -> usize {
        self.n_y + 1
    }

    /// Reduces to the token-level order when there are too many generators,
    /// then pads with zero generators up to exactly `k_g`.
    pub fn fit_generators(&self, z: &Zonotope) -> Result<Zonotope> {
        if z.dim() != self.n_y {
            return Err(Error::DimensionMismatch {
                op: "tokenize",
                left: format!("n_y {}", self.n_y),
                right: format!("zonotope of dimension {}", z.dim()),
            });
        }
        let z = if z.num_generators() > self.k_g {
            z.reduce(self.k_g / self.n_y)?
        } else {
            z.clone()
        };
        if z.num_generators() > self.k_g {
            return Err(Error::TooManyGenerators {
                found: z.num_generators(),
                max: self.k_g,
            });
        }
        z.pad_generators(self.k_g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenRole {
    Center,
    Generator,
}

/// Each token is `(vector part, step / t_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Vec<f64>>,
    pub roles: Vec<TokenRole>,
    pub steps: Vec<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One center token then `k_g` generator tokens per zonotope.
pub fn tokenize(zonos: &[Zonotope], steps: &[usize], cfg: &TokenizerConfig) -> Result<TokenSequence> {
    if zonos.len() != steps.len() {
        return Err(Error::InvalidArgument(format!(
            "{} zonotopes but {} step indices",
            zonos.len(),
            steps.len()
        )));
    }
    let mut seq = TokenSequence {
        tokens: Vec::with_capacity(zonos.len() * cfg.block_len()),
        roles: Vec::with_capacity(zonos.len() * cfg.block_len()),
        steps: Vec::with_capacity(zonos.len() * cfg.block_len()),
    };
    for (z, &k) in zonos.iter().zip(steps) {
        let z = cfg.fit_generators(z)?;
        let time = k as f64 / cfg.t_max;
        let mut push = |v: &[f64], role| {
            let mut t = v.to_vec();
            t.push(time);
            seq.tokens.push(t);
            seq.roles.push(role);
            seq.steps.push(k);
        };
        push(z.center(), TokenRole::Center);
        for g in z.generators() {
            push(g, TokenRole::Generator);
        }
    }
    Ok(seq)
}

/// Center from the first token, generators from the rest. Accepts tokens of
/// width `n_y` (model outputs) or `n_y + 1` (the time slot is dropped).
pub fn detokenize<T: AsRef<[f64]>>(block: &[T], cfg: &TokenizerConfig) -> Result<Zonotope> {
    if block.len() != cfg.block_len() {
        return Err(Error::InvalidArgument(format!(
            "token block of length {} (expected {})",
            block.len(),
            cfg.block_len()
        )));
    }
    let width = block[0].as_ref().len();
    if width != cfg.n_y && width != cfg.n_y + 1 || block.iter().any(|t| t.as_ref().len() != width) {
        return Err(Error::DimensionMismatch {
            op: "detokenize",
            left: format!("token width {} or {}", cfg.n_y, cfg.n_y + 1),
            right: format!("token width {width}"),
        });
    }
    let center = block[0].as_ref()[..cfg.n_y].to_vec();
    let gens: Vec<f64> = block[1..]
        .iter()
        .flat_map(|t| t.as_ref()[..cfg.n_y].iter().copied())
        .collect();
    Zonotope::from_flat(center, gens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TokenizerConfig {
        TokenizerConfig {
            n_y: 2,
            k_g: 8,
            t_max: 10.0,
            n_o: 5,
        }
    }

    #[test]
    fn prompt_of_forty_five_tokens() {
        let z = Zonotope::from_box(vec![1.0, 2.0], &[0.1, 0.2]).unwrap();
        let seq = tokenize(&vec![z; 5], &[0, 1, 2, 3, 4], &cfg()).unwrap();
        assert_eq!(seq.len(), 45);
        assert_eq!(seq.tokens[0], vec![1.0, 2.0, 0.0]);
        assert_eq!(seq.tokens[9][2], 0.1);
        assert_eq!(seq.roles[9], TokenRole::Center);
        assert_eq!(seq.roles[10], TokenRole::Generator);
    }

    #[test]
    fn round_trip_is_exact() {
        let z = Zonotope::new(vec![0.3, -1.7], &[vec![0.5, 0.25], vec![-1.0, 3.0], vec![1e-7, 2.0]]).unwrap();
        let seq = tokenize(std::slice::from_ref(&z), &[6], &cfg()).unwrap();
        let back = detokenize(&seq.tokens, &cfg()).unwrap();
        assert_eq!(back.drop_zero_generators(), z);
        assert_eq!(back.num_generators(), 8);
        assert_eq!(&back.generators_flat()[..6], z.generators_flat());
    }

    #[test]
    fn zero_zonotope_tokens() {
        let z = Zonotope::point(vec![0.0, 0.0]).unwrap();
        let seq = tokenize(&[z], &[3], &cfg()).unwrap();
        for t in &seq.tokens {
            assert_eq!(&t[..2], &[0.0, 0.0]);
            assert_eq!(t[2], 0.3);
        }
        let back = detokenize(&vec![vec![0.0; 2]; 9], &cfg()).unwrap();
        assert_eq!(back.center(), &[0.0, 0.0]);
        assert_eq!(back.num_generators(), 8);
    }

    #[test]
    fn oversized_sets_reduced_to_kg() {
        let gens: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 1.0]).collect();
        let z = Zonotope::new(vec![0.0, 0.0], &gens).unwrap();
        let seq = tokenize(&[z], &[0], &cfg()).unwrap();
        assert_eq!(seq.len(), 9);
    }

    #[test]
    fn wrong_block_length() {
        assert!(detokenize(&vec![vec![0.0; 3]; 4], &cfg()).is_err());
        assert!(detokenize(&vec![vec![0.0; 5]; 9], &cfg()).is_err());
    }

    #[test]
    fn padding_changes_only_zero_tokens() {
        let c = TokenizerConfig {
            n_y: 1,
            k_g: 3,
            t_max: 1.0,
            n_o: 1,
        };
        let a = Zonotope::new(vec![1.0], &[vec![2.0]]).unwrap();
        let b = a.pad_generators(2).unwrap();
        let ta = tokenize(&[a], &[0], &c).unwrap();
        let tb = tokenize(&[b], &[0], &c).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(TokenizerConfig { k_g: 7, ..cfg() }.validate().is_err());
        assert!(TokenizerConfig { t_max: 0.0, ..cfg() }.validate().is_err());
    }
}
