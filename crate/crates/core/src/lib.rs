pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod graphs;
pub mod hgat;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
