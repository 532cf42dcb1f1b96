//! Two-source grayscale image fusion with an untrained convolutional prior.
//!
//! A randomly initialised encoder-decoder is optimised so that its output,
//! scaled by per-pixel sensor gains, reproduces both source images. The
//! minimum-loss output, averaged over channels, is the fused image.

pub mod error;
pub mod fmt;
pub mod fusion;
pub mod gains;
pub mod image;
pub mod metrics;
pub mod net;

pub use error::{Error, Result};
pub use fusion::{average_channels, fusion_loss, run_fusion, FusionConfig, FusionResult};
pub use gains::{estimate_gains, GainPair};
pub use image::{BitDepth, Image, ImageFormat};
pub use metrics::{evaluate_all, MetricReport};
pub use net::{NetworkSpec, ParameterStore, Tensor};
