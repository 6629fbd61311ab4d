pub mod arrivals;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod network;
pub mod oracle;
pub mod rates;
pub mod streams;
pub mod swaps;

pub use error::{Error, Result};
pub use exec::Execution;
