pub mod calculus;
pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod quadrature;
pub mod solver;
pub mod state;

pub use error::{Error, Result};
