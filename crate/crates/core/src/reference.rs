//! The reference mass-spring-damper design used by the examples, the CLI
//! defaults and the acceptance checks: a sixth-order plant with a 0.2 s input
//! delay and an eight-harmonic controller at a 2 Hz base frequency.

use std::f64::consts::PI;

use crate::error::Result;
use crate::filtersynth::FilterDesignSpec;
use crate::plantmodel::{reflect_unstable_poles, DelayedRationalPlant};
use crate::sigmodel::harmonic_set;

pub const BASE_RAD_S: f64 = 4.0 * PI;
pub const HARMONICS: usize = 8;
pub const RELATIVE_DEGREE: usize = 5;
pub const Q_SCALE: f64 = 1000.0;
pub const R_WEIGHT: f64 = 1.0;
pub const TAU_S: f64 = 0.2;

/// Identified coefficients exactly as listed for the test rig. The
/// denominator has a lightly damped pair at `5.93 ± 63.1j`, so this model
/// fails the Hurwitz check.
pub fn identified_plant() -> DelayedRationalPlant {
    DelayedRationalPlant {
        numerator: vec![1.031e6, 4991.0, 1258.0],
        denominator: vec![3e9, 3.3e7, 8.4e6, 5.2e4, 5764.0, 4.2, 1.0],
        tau_s: TAU_S,
    }
}

/// [`identified_plant`] with its unstable pair mirrored into the left
/// half-plane: same magnitude response, same degrees, stable.
pub fn reference_plant() -> DelayedRationalPlant {
    reflect_unstable_poles(&identified_plant()).expect("identified plant has a valid shape")
}

/// `k = 8`, `ω_b = 4π`, `n_r = 5`, `Q = 1000·I₁₇`, `R = 1`, auxiliary poles
/// at −100, −110, −120, −130.
pub fn reference_spec() -> Result<FilterDesignSpec> {
    FilterDesignSpec::with_defaults(harmonic_set(BASE_RAD_S, HARMONICS)?, RELATIVE_DEGREE, Q_SCALE, R_WEIGHT)
}

/// Output disturbance gain profile `G_s = G_m·0.9/(0.05s + 1)`.
pub const MISMATCH_NUM: [f64; 1] = [0.9];
pub const MISMATCH_DEN: [f64; 2] = [1.0, 0.05];
