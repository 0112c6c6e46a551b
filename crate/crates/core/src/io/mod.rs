//! Run configuration, binary containers, CSV reports and raster plots.
//!
//! Every binary file starts with an 8-byte magic and a little-endian u32 version;
//! readers reject any other version.

mod bev;
mod binary;
mod checkpoint;
mod config;
mod dataset_file;
mod predictions;
mod report;

pub use bev::{encode_png, render_bev, sample_color, write_png, Viewport, PAST_COLOR, TRUTH_COLOR};
pub use binary::atomic_write;
pub use checkpoint::{
    decode_diffusion_checkpoint, decode_vae_checkpoint, encode_diffusion_checkpoint, encode_vae_checkpoint,
    read_diffusion_checkpoint, read_vae_checkpoint, write_diffusion_checkpoint, write_vae_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{DataSection, DiffusionSection, PathsSection, RunConfig, SamplerSection, SceneEntry, VaeSection};
pub use dataset_file::{
    dataset_violations, decode_dataset, encode_dataset, read_dataset, validate_dataset_file, write_dataset,
    CHANNEL_ORDER, DATASET_MAGIC, DATASET_VERSION,
};
pub use predictions::{
    decode_predictions, encode_predictions, read_predictions, write_predictions, PredictionFile, PREDICTIONS_MAGIC,
    PREDICTIONS_VERSION,
};
pub use report::{format_report, REPORT_HEADER};
