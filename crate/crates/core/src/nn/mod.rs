//! Forward-only neural transforms: analysis/synthesis, hyperprior networks,
//! the masked context model and the parameter fusion network.

pub mod layers;
mod model;
mod weights;

pub use model::{
    analysis_forward, attention_forward, context_forward, context_full, fusion_at, fusion_forward, fusion_raw,
    fusion_raw_at, hyper_analysis_forward, hyper_synthesis_forward, synthesis_forward, HYPER_STRIDE, LATENT_STRIDE,
};
pub use weights::{
    manifest, Analysis, DownStage, HyperAnalysis, HyperSynthesis, ModelConfig, NetworkWeights, Synthesis, UpStage,
    WEIGHT_MAGIC, WEIGHT_VERSION,
};
