//! Multi-harmonic internal model control: filter synthesis, controller
//! assembly, frequency and spectral analysis, and sampled-data simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod filtersynth;
pub mod imcassembly;
pub mod numkernel;
pub mod plantmodel;
pub mod poly;
pub mod reference;
pub mod sigmodel;
pub mod sim;
pub mod statespace;

pub use error::{Error, Result};
