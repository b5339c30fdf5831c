pub mod cluster;
pub mod config;
pub mod embedding;
pub mod error;
pub mod forecast;
pub mod havok;
pub mod output;
pub mod pipeline;
pub mod signal;
pub mod stats;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
