//! Weakly supervised appliance detection and per-timestamp localization for
//! aggregate smart-meter series.
//!
//! The crate is organised bottom-up:
//!
//! * [`gradcore`]: a small differentiable engine (conv1d, batch norm, ReLU,
//!   global average pooling, softmax cross-entropy, Adam).
//! * [`resnet`]: the 1-D residual classifier and its class activation maps.
//! * [`ensemble`]: multi-kernel ensemble training and detection.
//! * [`localizer`]: CAM post-processing into status and power estimates.
//! * [`dataproc`]: resampling, forward-fill, windowing, labels and splits.
//! * [`synth`]: seeded synthetic households with exact ground truth.
//! * [`metrics`]: localization, energy and detection scores.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataproc;
pub mod ensemble;
mod error;
pub mod gradcore;
pub mod localizer;
pub mod metrics;
pub mod resnet;
pub mod synth;

pub use error::{Error, Result};
