//! Average-reward linearly-solvable MDPs with hierarchical decomposition.

pub mod almdp;
pub mod bench;
pub mod envs;
pub mod error;
pub mod format;
pub mod hierarchy;
pub mod learner;
pub mod linalg;
pub mod lmdp;
pub mod online;

pub use error::{Error, Result};
