//! Demo applications and their file formats.

pub mod bellman;
pub mod checkpoint;
pub mod config;
pub mod density;
pub mod gmm;
pub mod metric;
pub mod output;
pub mod trajectory;
