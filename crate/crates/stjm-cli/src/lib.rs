//! Building blocks of the `stjm` command-line tool: flag/config resolution,
//! CSV panel ingestion, rolling-feature engineering and output emission.

pub mod config;
pub mod emit;
pub mod ingest;
pub mod rolling;
pub mod schema;
