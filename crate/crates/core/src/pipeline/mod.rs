//! End-to-end stages: dataset generation, VAE and denoiser training, sampling and evaluation.

mod features;
mod predict;
mod train;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use features::{condition_vector, encode_means, encode_records, interpolate_latents, raw_sequence, EncodedRecord};
pub use predict::{evaluate, mean_row, predict_record, sample_records, EvalRow, RecordPrediction};
pub use train::{
    prepare_diffusion_data, train_diffusion, train_vae, vae_panoramas, DiffusionData, DiffusionModel, DiffusionTrainConfig,
    VaeModel, VaeTrainConfig,
};

/// Which inputs reach the denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Conditioning {
    /// Full past trajectory plus the current visual-memory latent.
    #[default]
    Full,
    /// Latents are zeroed in both the condition and the denoised sequence.
    NoVisual,
    /// Only the last three past poses survive.
    Markovian,
}

impl Conditioning {
    pub fn uses_visual(self) -> bool {
        !matches!(self, Conditioning::NoVisual)
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        [Conditioning::Full, Conditioning::NoVisual, Conditioning::Markovian]
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("conditioning code {code}")))
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conditioning::Full => "full",
            Conditioning::NoVisual => "no_visual",
            Conditioning::Markovian => "markovian",
        })
    }
}

impl FromStr for Conditioning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Conditioning::Full),
            "no_visual" => Ok(Conditioning::NoVisual),
            "markovian" => Ok(Conditioning::Markovian),
            other => Err(Error::Config(format!("unknown conditioning {other:?}"))),
        }
    }
}
