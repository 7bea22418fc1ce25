//! File formats, configuration and the end-to-end pipeline around
//! [`timerft_core`].

pub mod checkpoint;
pub mod config;
pub mod csv_io;
pub mod manifest;
pub mod pipeline;

pub use timerft_core as core;
