pub mod analysis;
pub mod certify;
pub mod cli;
pub mod error;
pub mod partition;
pub mod regulator;
pub mod signs;

pub use error::{Error, Result};
