//! Shared fixtures for the benchmarks.

use photon_filter_core::{KetState, ModelParams, PulseShape};

/// Two simultaneous Gaussian photons on equally coupled channels.
pub fn two_gaussians() -> ModelParams {
    let pulse = PulseShape::Gaussian { omega: 2.92, tau: 3.0 };
    ModelParams {
        kappa1: 1.0,
        kappa2: 1.0,
        r: std::f64::consts::FRAC_1_SQRT_2,
        pulse1: pulse,
        pulse2: pulse,
        eta: KetState::ground(),
    }
}
