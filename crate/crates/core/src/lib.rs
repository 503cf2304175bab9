//! Geometric, probabilistic and evaluation machinery for controllable 4D LiDAR
//! scene generation: scene graphs, layout diffusion, range-image coding,
//! autoregressive warping, layout-driven editing, a ray-cast scene
//! synthesizer and the metric suite.

pub mod diffusion;
pub mod edit;
pub mod error;
pub mod evalsuite;
pub mod geometry;
pub mod layout;
pub mod rangecodec;
pub mod scenegraph;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
