//! Forward-only stereo matching on the CPU.
//!
//! The pipeline builds a group-wise correlation volume from texture
//! features, aggregates every disparity hypothesis with depth-guided
//! per-pixel dynamic convolution kernels, regresses an initial disparity by
//! soft-argmin, refines it with a convolutional GRU, and reconstructs full
//! resolution by depth-guided convex upsampling. Each numeric stage ships
//! with a brute-force oracle (`oracle`, `cost_volume::gwc_volume_oracle`)
//! used by the tests and the benchmark harness.

pub mod cost_volume;
pub mod ddca;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod oracle;
pub mod pipeline;
pub mod refine;
pub mod rng;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use tensor::{concat_channels, KernelBank, Tensor};
