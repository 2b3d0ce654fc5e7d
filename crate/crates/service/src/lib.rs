//! Command-line pipelines and the HTTP service for the regiongrasp engine.

pub mod api;
pub mod cli;
pub mod formats;
pub mod pipeline;
