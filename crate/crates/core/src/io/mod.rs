//! File formats: PNM images, PFM disparity maps, the raw tensor container,
//! mask files, and the JSON run configuration.

pub mod colormap;
pub mod config;
pub mod pfm;
pub mod pnm;
pub mod tensor_file;

pub use colormap::write_colormap;
pub use config::{ChannelPlan, FeatureSource, IoPaths, RunConfig, WeightsPreset};
pub use pfm::{read_pfm, write_pfm};
pub use pnm::{read_mask, read_pnm, read_pnm_rgb, write_mask, write_pnm};
pub use tensor_file::{read_tensor, write_tensor};
