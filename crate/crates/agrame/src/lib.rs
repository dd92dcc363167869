//! Files and command-line pipelines around `agrame-core`.

pub mod checkpoint;
pub mod cli;
pub mod formats;
pub mod storage;

pub use agrame_core;
