//! Numerical laboratory for two-slit interference behind integrable and
//! chaotic triangular billiards.

pub mod classical;
pub mod config;
pub mod experiment;
pub mod geometry;
pub mod poles;
pub mod screen;
pub mod sid;
pub mod snapshot;
pub mod solver;
pub mod spectral;
