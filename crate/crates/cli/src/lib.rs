//! Command-line pipelines and the annotation service.

pub mod commands;
pub mod config;
pub mod service;
