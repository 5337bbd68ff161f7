pub mod cli;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod geometry;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod tensor;
pub mod tokenizer;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
