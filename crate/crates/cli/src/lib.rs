//! Experiment harness, plotting and self checks behind the `dimple` binary.

pub mod grid;
pub mod harness;
pub mod plot;
pub mod selftest;
