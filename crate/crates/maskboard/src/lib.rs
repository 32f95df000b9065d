//! Project store, local HTTP service and command-line driver for the
//! maskboard pipeline. The analysis itself lives in `maskboard_core`.

pub mod cli;
pub mod error;
pub mod project;
pub mod remote;
pub mod service;
pub mod store;

pub use error::{Error, Result};
pub use store::{Kind, Store};
