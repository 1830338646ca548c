pub mod error;
pub mod fbm;
pub mod functional;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod quad;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
