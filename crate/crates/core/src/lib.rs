//! Region-focal, target-oriented 6-DoF grasp detection and evaluation on
//! synthetic RGB-D scenes.

pub mod codec;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geom;
pub mod guidance;
pub mod scene;

pub use error::{Error, Result};
