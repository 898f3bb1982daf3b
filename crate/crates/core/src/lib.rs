pub mod accounting;
pub mod algorithms;
pub mod certificate;
pub mod cli;
pub mod compressors;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod vectors;

pub use error::{Error, Result};
