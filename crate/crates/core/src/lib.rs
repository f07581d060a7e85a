pub mod annot;
pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod infer;
pub mod model;
pub mod neural;
pub mod score;
pub mod tagging;
pub mod train;

pub use error::{Error, Result};
