pub mod classifier;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod io;
pub mod optim;
pub mod phantom;
pub mod pipeline;
pub mod pcat;
pub mod stats;
pub mod stenosis;

pub use error::{Error, Result};
