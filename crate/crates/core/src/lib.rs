//! Offloading resource assignment for multiuser mobile edge computing.
//!
//! [`scenario`] models one frame, [`relax`] builds node relaxations solved by
//! the dense simplex in [`lp`], [`bnb`] is the exact tree search,
//! [`dataset`] and [`mlp`] turn its traces into a pruning classifier and
//! [`ibnb`] searches again with that classifier pruning the tree.

pub mod bnb;
pub mod dataset;
pub mod error;
pub mod ibnb;
pub mod lp;
pub mod mlp;
pub mod relax;
pub mod scenario;
pub mod textio;

pub use error::{Error, Result};
