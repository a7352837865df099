//! Command-line interface and HTTP service for the `convtab` parser.

pub mod cli;
pub mod server;
