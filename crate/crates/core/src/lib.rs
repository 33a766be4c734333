//! Kit-assembly teleoperation core: geometry, procedural kits, simulated
//! observation, shape completion, 6DoF pose snapping and insertion planning.

pub mod completion;
pub mod error;
pub mod geom;
pub mod kitgen;
pub mod pipeline;
pub mod plan;
pub mod scene;
pub mod snap;

pub use error::{Error, Result};
