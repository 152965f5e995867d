//! Command-line front end and HTTP reward service.

pub mod app;
pub mod config;
pub mod remote;
pub mod service;
