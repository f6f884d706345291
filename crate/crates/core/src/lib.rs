//! Corner case scoring for front-camera driving video.
//!
//! A frame counts as a corner case candidate when a relevant (mobile) object
//! in a relevant (near, low in the image) location behaves in a way the
//! frame predictor did not anticipate. The crate provides
//!
//! - [`imaging`]: frames, image I/O, resizing and Gaussian low-pass,
//! - [`metrics`]: MSE, PSNR, SSIM and IoU,
//! - [`prediction`]: baseline and external next-frame predictors,
//! - [`segmentation`]: class table, mask ingestion and relevance masks,
//! - [`detector`]: error fusion, normalization, patches and events,
//! - [`synth`]: deterministic synthetic scenes with ground-truth events,
//! - [`cli`]: the `cornercase` command-line tool.

pub mod cli;
pub mod config;
pub mod detector;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod plot;
pub mod prediction;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
