pub mod aggregation;
pub mod boxes;
pub mod check;
pub mod denoise;
pub mod depth;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod query;
pub mod rng;
pub mod sim;
pub mod temporal;

pub use error::{Error, Result};
