//! Synthetic look-like-CT wood-log toolkit.
//!
//! The pipeline stages are:
//!
//! 1. **synthesis** – closed-form bark-surface and internal-density fields of a
//!    parametric log, plus seeded sampling of balanced log datasets.
//! 2. **raster** – sampling the analytic fields into every data representation
//!    used downstream: surface patches, half-plane density targets, cross-section
//!    images, voxel volumes, slice sequences, and ground-truth ellipse annotations.
//! 3. **extract** – classical CT-slice processing: recentering, median denoising,
//!    bark-contour extraction, blob detection, ellipse fitting, cross-slice
//!    tracking, and track-size filtering.
//! 4. **metrics** – voxel RMSE, box IoU, average precision at 50/75, and
//!    reproducible train/val/test splits.
//! 5. **minimodel** – a desk-scale 2D encoder-decoder (P-ReLU, dropout, MSE,
//!    Adam with a step learning-rate schedule) with analytically verified
//!    gradients, mapping surface patches to half-plane density targets.
//! 6. **io / cli** – the WLOG raw volume container, detection interchange
//!    records, legacy VTK export, manifests, and the command-line surface.

pub mod cli;
pub mod config;
mod error;
pub mod extract;
pub mod image2d;
pub mod io;
pub mod metrics;
pub mod minimodel;
pub mod raster;
pub mod synthesis;

pub use error::{Error, FormatError, Result};
