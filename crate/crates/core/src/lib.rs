//! Observer-based boundary control of the linear Kuramoto-Sivashinsky equation:
//! modal truncation, gain design, LMI certification and closed-loop simulation.

pub mod cli;
pub mod config;
pub mod error;
pub mod gains;
pub mod linalg;
pub mod lmi;
pub mod presets;
pub mod sdp;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
