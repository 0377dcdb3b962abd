//! Physics-grounded verb learning from simulated object trajectories.

pub mod error;
pub mod eval;
pub mod export;
pub mod geometry;
pub mod io;
pub mod label;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
