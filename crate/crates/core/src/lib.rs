//! Raw video denoising stack: Bayer raw handling, multi-branch windowed
//! attention blocks, structural reparameterization, and the training /
//! evaluation harness around them.

pub mod attn;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod params;
pub mod raw;
pub mod reparam;
pub mod runconfig;
pub mod session;
pub mod train;

pub use error::{Error, Result};
