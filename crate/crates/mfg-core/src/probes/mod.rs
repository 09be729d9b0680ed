//! Exponentially weighted probe solutions and their pairing functionals.

pub mod cgo;
pub mod pairing;
pub mod remainder;

pub use cgo::{
    build_amplitudes, ray_envelope, ray_integral, time_window, time_window_deriv, CgoParams,
    ProbeAmplitudes, EXPONENT_BUDGET,
};
pub use pairing::{
    born_pairing, leading_term_pairing, richardson_in_rho, volume_pairing, window_transform,
};
pub use remainder::{conjugated_backward_response, solve_probe_pair, ProbePair};
