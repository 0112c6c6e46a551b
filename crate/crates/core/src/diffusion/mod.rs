//! Noise schedules, reverse samplers, and the denoising objective.

mod sampler;
mod schedule;
mod train;

pub use sampler::{
    ddim_step, ddim_timesteps, ddpm_step, gaussian_oracle_eps, hybrid_sample, noise_stream, q_sample, reverse_plan,
    CountingModel, DenoiserModel, EpsModel, GaussianOracle, ReverseStep, SampleBatch, SamplerConfig, SamplerMode,
};
pub use schedule::{default_schedule, make_schedule, NoiseSchedule};
pub use train::{decode_future_memory, diffusion_train_step, smooth_l1};
