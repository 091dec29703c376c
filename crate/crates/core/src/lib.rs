//! Simulation of NV center spin-1 dynamics under mechanical (stress),
//! magnetic and electric driving, together with the acoustic-resonator and
//! confocal-optics models needed to interpret mechanically driven spin
//! resonance experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod numeric;
pub mod optics;
pub mod perturbation;
pub mod spin_model;

pub use error::{Error, Result};
