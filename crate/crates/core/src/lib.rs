//! Forecasting future 3D human body pose from past poses, head orientation,
//! and egocentric 3D object bounding boxes.
//!
//! The model is a GCN-based encoder/residual/decoder operating on
//! DCT-encoded trajectories: an encoder GCN and a residual GCN stack extract
//! pose features, MLPs extract head and per-category object-box features,
//! everything is fused into one spatio-temporal graph, and a second residual
//! stack plus a decoder GCN emit the forecast, anchored by a global residual
//! to the last observed pose. Training, a synthetic reach-task generator,
//! baselines, and a per-horizon MPJPE evaluation harness are included.
//!
//! All numerics are `f64`. Bulk loops are data-parallel via rayon (feature
//! `parallel`, on by default) with a bitwise-identical sequential fallback.

pub mod error;
pub mod eval;
pub mod exec;
pub mod checkpoint;
pub mod data;
pub mod dct;
pub mod gcn;
pub mod gradcheck;
pub mod mlp;
pub mod model;
pub mod scene;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
