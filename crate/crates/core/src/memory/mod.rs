//! Rolling keyframe buffer and visual-memory panorama stitching.

mod buffer;
mod edges;

pub use buffer::{Frame, Keyframe, MemoryBuffer, MemoryConfig};
pub use edges::{canny_edges, trim_depth_edges, EdgeThresholds, MAX_DILATE_PX};

/// Default visibility radius for the visual memory, in meters.
pub const DEFAULT_MAX_RANGE_M: f64 = 8.0;
