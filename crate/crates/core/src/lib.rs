//! Deterministic simulator of a single-atom electromagnetic analogue of
//! gravity-mediated entanglement.

pub mod atom;
pub mod fieldqed;
pub mod frames;
pub mod gme;
pub mod metrics;
pub mod noise;
pub mod protocol;
pub mod pulses;
pub mod qmath;
pub mod state;
pub mod tomo;
