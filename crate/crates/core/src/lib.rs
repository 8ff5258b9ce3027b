pub mod anm;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod music;
pub mod nn;
pub mod reconstruct;
pub mod sim;

pub use error::{Error, Result};
