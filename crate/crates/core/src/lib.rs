pub mod accountant;
pub mod baselines;
pub mod error;
pub mod explain;
pub mod gradcore;
pub mod harness;
pub mod image;
pub mod interpreter;
pub mod model;
pub mod policy;
pub mod vit;

pub use error::{Error, Result};
