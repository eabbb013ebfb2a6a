pub mod cli;
pub mod data_io;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod forecasters;
pub mod gbdt;
pub mod labeler;
pub mod metrics;
pub mod series;

pub use error::{OspError, Result};
