//! Command-line driver and local JSON service for the synthesis engine.

pub mod server;
pub mod service;
