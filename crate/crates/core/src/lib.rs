//! Hybrid dynamic pruning for attention: fixed-point arithmetic, tensor I/O,
//! reference attention, the pruned pipeline and a co-processor cost simulator.

pub mod attention_ref;
pub mod error;
pub mod fxp;
pub mod hdp;
pub mod sim;
pub mod tensorio;

pub use error::{Error, Result};
