//! Quantum reservoir computing with random-matrix measurements.
//!
//! A driven Heisenberg spin chain ([`reservoir`]) is probed by seeded random
//! Hermitian observables on random subsets of sites ([`features`]), and a
//! small trained readout ([`readout`]) maps the measured expectations to
//! predictions. [`experiments`] wires the pieces into the benchmark runs.

pub mod error;
pub mod experiments;
pub mod features;
pub mod linalg;
pub mod randmat;
pub mod readout;
pub mod reservoir;
pub mod rng;
pub mod tasks;

pub use error::{QrcError, Result};
