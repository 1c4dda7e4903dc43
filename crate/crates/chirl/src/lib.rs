//! Experiment driver for `chirl-core`: file formats, CSV outputs, the
//! preset experiments and the command-line interface.

pub mod cli;
pub mod experiment;
pub mod formats;
pub mod tables;
