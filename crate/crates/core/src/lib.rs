//! Event-camera pose estimation toolkit: event batching and frame rendering,
//! a wireframe event simulator, frame augmentation, a noisy landmark oracle,
//! PnP with confidence filtering and LM refinement, and relative-pose metrics.

pub mod augment;
pub mod cli;
pub mod error;
pub mod event_model;
pub mod event_sim;
pub mod geometry;
pub mod io;
pub mod landmark_oracle;
pub mod metrics;
pub mod pipeline;
pub mod pnp;
pub mod time_match;

pub use error::{Error, Result};
