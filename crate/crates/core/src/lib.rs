pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod evaluation;
pub mod math;
pub mod model;
pub mod querygen;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
