//! Experiment harness: episodes under genie, LRNet and Kalman alignment,
//! summary metrics, CSV/SVG artifacts and the `uavbeam` command line.

pub mod app;
pub mod checks;
pub mod dataset;
pub mod experiment;
pub mod plot;
pub mod report;
