//! Classification of low-rank Gaussian signals under model mismatch.

pub mod bounds;
pub mod classifier;
pub mod error;
pub mod expansion;
pub mod experiments;
pub mod io;
pub mod model;
pub mod numlin;
pub mod subspace;

pub use error::{Error, Result};
