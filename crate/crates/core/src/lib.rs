//! Deterministic global optimization of problems with trained Gaussian
//! processes embedded.

pub mod bnb;
pub mod cli;
pub mod envelopes;
pub mod error;
pub mod gp;
pub mod interval;
pub mod linalg;
pub mod mccormick;
pub mod problem;
pub mod train;

pub use error::{Error, Result};
pub use interval::Interval;
pub use mccormick::Relaxation;
