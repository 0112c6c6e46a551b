//! Egocentric scene-aware trajectory prediction.
//!
//! Posed depth/semantic frames are stitched into a panoramic visual memory, a
//! conditional diffusion model denoises joint future-trajectory/latent
//! sequences, and predictions are scored with collision, smoothness and
//! best-of-N metrics.

pub mod diffusion;
pub mod error;
pub mod geom;
pub mod io;
pub mod memory;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod scene;

pub use error::{Error, Result};
pub use nalgebra;
pub use ndarray;
