//! Command-line tool and HTTP service over the hmdap engine.

pub mod cli;
pub mod http;
pub mod jobs;
pub mod render;
