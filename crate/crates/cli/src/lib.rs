//! File formats, dataset readers and the experiment runner around
//! `deeptwist-core`.

pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod error;
pub mod fsutil;
pub mod metrics;
pub mod runmeta;
pub mod runner;
pub mod toy;

pub use error::{Error, Result};
