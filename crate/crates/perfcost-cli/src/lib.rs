//! Library surface of the experiment harness; the `perfcost` binary is a
//! thin shell over these modules.

pub mod config;
pub mod report;
pub mod runner;
pub mod svg;
pub mod synth;
pub mod world;
