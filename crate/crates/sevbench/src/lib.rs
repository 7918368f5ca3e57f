//! Std side of the benchmark: journal ingest, file formats, HTTP clients,
//! experiment runner and the command-line front end.

pub mod cli;
pub mod config;
pub mod embed;
pub mod evaluation;
pub mod hashing;
pub mod index_file;
pub mod inference;
pub mod ingest;
pub mod manifest;
