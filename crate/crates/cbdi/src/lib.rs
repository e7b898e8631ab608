//! Continuous-state branching processes with interactions: mechanisms,
//! boundary classification, dual processes and simulation.

pub mod boundary_params;
pub mod classifier;
pub mod cli_io;
pub mod duality_lab;
pub mod mechanisms;
pub mod potential_theory;
pub mod quad;
pub mod simulator;

pub use mechanisms::{Decomposition, JumpMeasure, Mechanism, MechanismClass, MechanismError, PhiPart, SigmaPart};
