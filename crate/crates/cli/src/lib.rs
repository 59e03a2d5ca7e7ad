//! Library half of the command-line tool, so integration tests can drive
//! the commands in-process.

pub mod dataset;
pub mod image;
pub mod manifest;
pub mod run;
