//! Distributed transparent volume rendering without depth ordering.
//!
//! Classic sort-last compositing needs every rank's ray segments collected
//! and depth-sorted per pixel, which falls apart once ranks own arbitrary,
//! possibly interleaved pieces of the volume. This crate takes a different
//! route: each rank summarizes the absorbance along its rays as a short
//! vector of power moments over warped depth. Moments add componentwise, so
//! a single allreduce yields the scene-wide summary no matter how the volume
//! is partitioned. Each rank then reweights its own samples by the
//! transmittance reconstructed from the global moments, and one more
//! reduction sums the partial colors into the final frame. Two reductions,
//! any partition, no per-pixel sorting.
//!
//! The crate also ships the exact sort-last path (as the ground-truth
//! oracle and the baseline the approximation is judged against), SSIM/PSNR
//! image comparisons, and cost models that price what direct-send or
//! binary-swap compositors would move for the same frames.
//!
//! Ranks are simulated in-process: each runs on its own thread and all
//! exchanges go through barrier-synchronized collectives, keeping the
//! communication structure of the real thing observable and the byte
//! accounting honest.

pub mod compositor;
pub mod error;
pub mod image;
pub mod math;
pub mod metrics;
pub mod moments;
pub mod render;
pub mod report;
pub mod scene;

pub use error::{Error, Result};
