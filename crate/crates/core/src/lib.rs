//! Learned memory scheduling for question answering over unbounded streams.

pub mod autodiff;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod memory;
pub mod nn;
pub mod policy;
pub mod solver;
pub mod tasks;
pub mod train;

pub use error::{EmrError, Result};
