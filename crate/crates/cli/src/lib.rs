//! Library surface of the `mercat` binary: file formats, index bundles, and
//! the end-to-end experiment pipeline. Every subcommand is a thin wrapper
//! over these functions, so the pipeline and the tests compose the same
//! code paths the CLI exposes.

pub mod fileio;
pub mod index;
pub mod pipeline;
