//! File formats, experiment protocols, reports and the command line around
//! [`synthgap_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod lab;
pub mod report;
pub mod run;

pub use error::{Error, Result};
pub use synthgap_core as core;
