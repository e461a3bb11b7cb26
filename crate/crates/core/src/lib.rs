pub mod assignment;
pub mod cli;
pub mod error;
pub mod exits;
pub mod geometry;
pub mod matsim;
pub mod network;
pub mod pipeline;
pub mod routing;
pub mod scenario;
pub mod service;
pub mod sim;
pub mod sweep;

pub use error::{Error, Result};
