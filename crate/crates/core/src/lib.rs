//! Enhancement of low-visibility, unevenly illuminated grayscale images.
//!
//! The pipeline estimates the illumination with a Gaussian low-pass filter
//! whose size is chosen from the SSIM-versus-kernel-size curve, removes it,
//! dithers the low-frequency part against banding, equalizes both parts with
//! an extremes-anchored CDF mapping and blends them back together.
//!
//! Alongside the pipeline the crate carries the quality metrics used to judge
//! it (entropy, SSIM, FSIM, correlation, contrast), the usual baselines (HE,
//! CLAHE, single-scale retinex) and a fog synthesizer for ground-truth scenes.

pub mod baselines;
pub mod enhance;
pub mod error;
pub mod filtering;
pub mod fogsim;
pub mod histogram;
pub mod image;
pub mod io;
pub mod metrics;
pub mod sdif;
mod spectral;

pub use crate::enhance::{hmhe_pipeline, EnhanceResult, PipelineConfig};
pub use crate::error::{Error, Result};
pub use crate::filtering::{BoundaryMode, GaussianSpec};
pub use crate::histogram::{cdf, histogram, Cdf, Histogram};
pub use crate::image::{normalize, ImageBuffer};
pub use crate::io::{load_image, save_image, BitDepth};
