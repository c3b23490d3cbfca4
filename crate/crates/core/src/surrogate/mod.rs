//! Zonotope tokenization and decoder-only transformer inference.

mod model;
mod rollout;
mod tokens;
mod weights;

pub use model::Transformer;
pub use rollout::{autoregress, autoregress_with, init_context, predict_next, ContextInit, FeedbackMode, Prediction};
pub use tokens::{detokenize, tokenize, TokenRole, TokenSequence, TokenizerConfig};
pub use weights::{Architecture, Manifest, TensorEntry, WeightBundle, FORMAT_VERSION, MANIFEST_FILE, WEIGHTS_FILE};
