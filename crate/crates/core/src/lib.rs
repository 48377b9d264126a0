pub mod config;
pub mod error;
pub mod locallemma;
pub mod oracle;
pub mod primes;
pub mod report;
pub mod rigor;
pub mod shearer;
pub mod stages;
pub mod symfunc;

pub use error::{Error, Result};
pub use rigor::Interval;
