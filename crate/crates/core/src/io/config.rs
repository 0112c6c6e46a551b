//! TOML run configuration. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{SamplerConfig, SamplerMode};
use crate::error::{Error, Result};
use crate::nn::{DenoiserConfig, VaeLossWeights, LATENT_DIM};
use crate::pipeline::{Conditioning, DiffusionTrainConfig, VaeTrainConfig};
use crate::scene::{DatasetConfig, SceneSpec, Template};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub template: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub scenes: Vec<SceneEntry>,
    pub walks_per_scene: usize,
    pub stride_steps: usize,
    pub pano_width: usize,
    pub pano_height: usize,
    pub future_vm_stride: usize,
    pub max_range_m: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            scenes: Template::ALL
                .iter()
                .flat_map(|t| (0..2).map(move |seed| SceneEntry { template: t.name().to_string(), seed }))
                .collect(),
            walks_per_scene: d.walks_per_scene,
            stride_steps: d.stride_steps,
            pano_width: d.pano_width,
            pano_height: d.pano_height,
            future_vm_stride: d.future_vm_stride,
            max_range_m: d.max_range_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSection {
    pub hidden: usize,
    pub use_semantic: bool,
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub lambda_l1: f64,
    pub lambda_ce: f64,
    pub lambda_info: f64,
}

impl Default for VaeSection {
    fn default() -> Self {
        let d = VaeTrainConfig::default();
        Self {
            hidden: d.hidden,
            use_semantic: d.use_semantic,
            steps: d.steps,
            batch: d.batch,
            lr: d.lr,
            lambda_l1: d.weights.l1,
            lambda_ce: d.weights.ce,
            lambda_info: d.weights.info,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub base_channels: usize,
    pub heads: usize,
    pub time_dim: usize,
    pub emb_dim: usize,
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub conditioning: String,
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub cond_dropout: f64,
    pub grad_clip: f64,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        let d = DiffusionTrainConfig::default();
        Self {
            base_channels: d.denoiser.base_channels,
            heads: d.denoiser.heads,
            time_dim: d.denoiser.time_dim,
            emb_dim: d.denoiser.emb_dim,
            timesteps: d.denoiser.timesteps,
            beta_start: d.beta_start,
            beta_end: d.beta_end,
            conditioning: d.conditioning.to_string(),
            steps: d.steps,
            batch: d.batch,
            lr: d.lr,
            cond_dropout: d.cond_dropout,
            grad_clip: d.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub mode: String,
    pub ddim_steps: usize,
    pub ddpm_tail: usize,
    pub batch: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self { mode: d.mode.to_string(), ddim_steps: d.ddim_steps, ddpm_tail: d.ddpm_tail_steps, batch: d.batch }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: PathBuf,
    pub vae: PathBuf,
    pub diffusion: PathBuf,
    pub predictions: PathBuf,
    pub report: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            dataset: "out/dataset.bin".into(),
            vae: "out/vae.ckpt".into(),
            diffusion: "out/diffusion.ckpt".into(),
            predictions: "out/predictions.bin".into(),
            report: "out/report.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub log_every: u64,
    pub data: DataSection,
    pub vae: VaeSection,
    pub diffusion: DiffusionSection,
    pub sampler: SamplerSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fully resolved configuration, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene_specs()?;
        self.dataset_config().map(|_| ())?;
        self.diffusion_config()?.denoiser.validate()?;
        self.sampler_config()?.validate(self.diffusion.timesteps)?;
        Ok(())
    }

    pub fn scene_specs(&self) -> Result<Vec<SceneSpec>> {
        self.data
            .scenes
            .iter()
            .map(|s| {
                let spec = SceneSpec::new(s.template.parse().map_err(|e: Error| Error::Config(e.to_string()))?, s.seed);
                spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                Ok(spec)
            })
            .collect()
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig> {
        let d = &self.data;
        if d.stride_steps == 0 || d.pano_width == 0 || d.pano_height == 0 || !(d.max_range_m > 0.0) {
            return Err(Error::Config("data stride, panorama size and range must be positive".into()));
        }
        Ok(DatasetConfig {
            walks_per_scene: d.walks_per_scene,
            stride_steps: d.stride_steps,
            seed: self.seed,
            pano_width: d.pano_width,
            pano_height: d.pano_height,
            max_range_m: d.max_range_m,
            future_vm_stride: d.future_vm_stride,
            ..DatasetConfig::default()
        })
    }

    pub fn vae_config(&self) -> VaeTrainConfig {
        let v = &self.vae;
        VaeTrainConfig {
            hidden: v.hidden,
            use_semantic: v.use_semantic,
            max_range_m: self.data.max_range_m,
            steps: v.steps,
            batch: v.batch,
            lr: v.lr,
            seed: self.seed,
            log_every: self.log_every,
            weights: VaeLossWeights { l1: v.lambda_l1, ce: v.lambda_ce, info: v.lambda_info },
        }
    }

    pub fn diffusion_config(&self) -> Result<DiffusionTrainConfig> {
        let d = &self.diffusion;
        Ok(DiffusionTrainConfig {
            denoiser: DenoiserConfig {
                base_channels: d.base_channels,
                heads: d.heads,
                time_dim: d.time_dim,
                emb_dim: d.emb_dim,
                timesteps: d.timesteps,
                latent_dim: LATENT_DIM,
                ..DenoiserConfig::default()
            },
            conditioning: d.conditioning.parse::<Conditioning>()?,
            beta_start: d.beta_start,
            beta_end: d.beta_end,
            steps: d.steps,
            batch: d.batch,
            lr: d.lr,
            cond_dropout: d.cond_dropout,
            grad_clip: d.grad_clip,
            seed: self.seed,
            log_every: self.log_every,
        })
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let s = &self.sampler;
        Ok(SamplerConfig {
            mode: s.mode.parse::<SamplerMode>()?,
            ddim_steps: s.ddim_steps,
            ddpm_tail_steps: s.ddpm_tail,
            batch: s.batch,
            seed: self.seed,
        })
    }
}
