//! Differentiable perceptual image-quality metrics and the toy-scale training,
//! model-selection and super-resolution tooling built on them.
//!
//! * [`image`]: image containers, PGM/PPM/PNG I/O, colour transforms,
//!   resampling.
//! * [`metrics`]: SSIM and MS-SSIM with exact gradients and a finite-difference
//!   oracle.
//! * [`losses`]: pixel losses, PSNR, and the batch losses used in training.
//! * [`nn`]: a small feed-forward engine (dense, conv, upsample, binarised
//!   bottleneck) with backprop, SGD/Adam and an early-stopping trainer.
//! * [`elvae`]: the expected-loss VAE objective and its training loop.
//! * [`mmd`]: squared-MMD estimators and relative-similarity model selection.
//! * [`sr`]: bicubic super-resolution baseline and Y-channel evaluation.

pub mod data;
pub mod elvae;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod mmd;
pub mod nn;
pub mod rng;
pub mod sr;
pub mod util;

pub use image::{Field, Image, ImageError, PixelRange, RgbImage};
pub use losses::{LossFunction, LossKind, Psnr};
pub use metrics::{MetricError, MetricKind, MetricParams, MetricResult};
pub use nn::{LayerSpec, Network, NnError, OptimizerConfig, Shape, TrainReport};

