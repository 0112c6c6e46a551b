//! Hand-differentiated networks: the panorama VAE, the UNet noise predictor, and their optimizer.

pub mod layers;
mod norm;
mod params;
mod unet;
mod vae;

pub use norm::{NormStats, MIN_STD};
pub use params::{adam_step, clip_grad_norm, grad_check, AdamConfig, AdamState, ParamId, ParamStore, GRAD_ZERO_FLOOR};
pub use unet::{denoiser_forward, markovian_condition, past_condition, Denoiser, DenoiserCache, DenoiserConfig};
pub use vae::{
    argmax, mmd, mmd_bandwidth, reconstruction_accuracy, semantic_targets, vae_decode, vae_encode,
    vae_forward_backward, vae_loss, Vae, VaeConfig, VaeLossParts, VaeLossWeights, VaeNoise, LATENT_DIM,
    PIXEL_CHANNELS,
};
