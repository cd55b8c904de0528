//! Simulation and closed-form analysis of RIS detection and identification.
//!
//! A base station listens to an unmodulated carrier reflected by several
//! reconfigurable intelligent surfaces, each flipping the phase of its
//! reflection with its own Walsh–Hadamard sequence. Correlating the received
//! frame against every known sequence tells the base station which surfaces
//! currently have a usable UE–RIS–BS path.
//!
//! - [`codes`]: identity sequences and their exact shifted correlation laws
//! - [`channel`]: path gain, spatial correlation and cascaded Rayleigh gains
//! - [`signal`]: received-frame synthesis
//! - [`detector`]: max-correlation detector and reachability decisions
//! - [`analysis`]: false/miss-detection probabilities and design helpers
//! - [`montecarlo`]: seeded, parallel trial runner

pub mod analysis;
pub mod channel;
pub mod codes;
pub mod detector;
pub mod error;
pub mod montecarlo;
pub mod rng;
pub mod signal;

pub use error::{Error, NumericalFailure, Result};
