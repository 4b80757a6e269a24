//! Command-line front end and local JSON API over a `saqd-core` project.

pub mod cli;
pub mod server;
pub mod views;

/// Version string sent in the `x-api-version` header of every response.
pub const API_VERSION: &str = "1";
