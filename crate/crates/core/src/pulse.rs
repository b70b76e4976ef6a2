//! Single-photon wave packets: amplitude `xi(t)`, remaining tail mass
//! `w(t) = ∫_t^∞ |xi|²`, and ancilla coupling `lambda(t) = xi / sqrt(w)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Below this tail mass the ancilla coupling is clamped to zero.
pub const W_EPSILON: f64 = 1e-12;

/// How far before its onset a rising-exponential pulse is truncated, in units of `1/gamma`.
const EXP_TRUNCATION: f64 = 20.0;
/// Half-width of the Gaussian truncation window, in units of `1/omega`.
const GAUSS_TRUNCATION: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    /// `-sqrt(gamma) exp(gamma t / 2)` for `t < 0`, zero afterwards.
    RisingExp { gamma: f64 },
    /// Rising exponential ending at `t = -delay`.
    DelayedRisingExp { gamma: f64, delay: f64 },
    /// Gaussian of bandwidth `omega` peaking at `tau`.
    Gaussian { omega: f64, tau: f64 },
    /// No photon: `xi = 0`, `w = 1`.
    Vacuum,
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
            }
        };
        match *self {
            PulseShape::RisingExp { gamma } => positive("gamma", gamma),
            PulseShape::DelayedRisingExp { gamma, delay } => {
                positive("gamma", gamma)?;
                if delay.is_finite() && delay >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("delay", format!("must be >= 0, got {delay}")))
                }
            }
            PulseShape::Gaussian { omega, tau } => {
                positive("omega", omega)?;
                if tau.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("tau", "must be finite"))
                }
            }
            PulseShape::Vacuum => Ok(()),
        }
    }

    pub fn is_vacuum(&self) -> bool {
        matches!(self, PulseShape::Vacuum)
    }

    /// End of an exponential pulse, where `xi` jumps to zero.
    pub fn cutoff(&self) -> Option<f64> {
        match *self {
            PulseShape::RisingExp { .. } => Some(0.0),
            PulseShape::DelayedRisingExp { delay, .. } => Some(-delay),
            _ => None,
        }
    }

    fn real_xi(&self, t: f64, left_limit: bool) -> f64 {
        match *self {
            PulseShape::RisingExp { gamma } => rising(gamma, t, left_limit),
            PulseShape::DelayedRisingExp { gamma, delay } => rising(gamma, t + delay, left_limit),
            PulseShape::Gaussian { omega, tau } => {
                let d = t - tau;
                (omega * omega / (2.0 * PI)).powf(0.25) * (-omega * omega * d * d / 4.0).exp()
            }
            PulseShape::Vacuum => 0.0,
        }
    }

    pub fn xi(&self, t: f64) -> Complex64 {
        Complex64::new(self.real_xi(t, false), 0.0)
    }

    /// `lim_{s -> t^-} xi(s)`; differs from `xi(t)` only at an exponential cutoff.
    pub fn xi_left(&self, t: f64) -> Complex64 {
        Complex64::new(self.real_xi(t, true), 0.0)
    }

    pub fn w(&self, t: f64) -> f64 {
        match *self {
            PulseShape::RisingExp { gamma } => rising_tail(gamma, t),
            PulseShape::DelayedRisingExp { gamma, delay } => rising_tail(gamma, t + delay),
            PulseShape::Gaussian { omega, tau } => 0.5 * erfc(omega * (t - tau) / std::f64::consts::SQRT_2),
            PulseShape::Vacuum => 1.0,
        }
    }

    /// `xi / sqrt(w)`, or zero once the pulse is exhausted (`w < W_EPSILON`).
    pub fn lambda(&self, t: f64) -> Complex64 {
        let w = self.w(t);
        if w < W_EPSILON {
            Complex64::new(0.0, 0.0)
        } else {
            self.xi(t) / w.sqrt()
        }
    }

    /// Time from which the truncated pulse is simulated.
    pub fn window_start(&self) -> Option<f64> {
        match *self {
            PulseShape::RisingExp { gamma } => Some(-EXP_TRUNCATION / gamma),
            PulseShape::DelayedRisingExp { gamma, delay } => Some(-delay - EXP_TRUNCATION / gamma),
            PulseShape::Gaussian { omega, tau } => Some(tau - GAUSS_TRUNCATION / omega),
            PulseShape::Vacuum => None,
        }
    }

    /// Time after which the pulse carries negligible amplitude.
    pub fn window_end(&self) -> Option<f64> {
        match *self {
            PulseShape::RisingExp { .. } | PulseShape::DelayedRisingExp { .. } => self.cutoff(),
            PulseShape::Gaussian { omega, tau } => Some(tau + GAUSS_TRUNCATION / omega),
            PulseShape::Vacuum => None,
        }
    }
}

fn rising(gamma: f64, t: f64, left_limit: bool) -> f64 {
    if t < 0.0 || (left_limit && t == 0.0) {
        -gamma.sqrt() * (gamma * t / 2.0).exp()
    } else {
        0.0
    }
}

fn rising_tail(gamma: f64, t: f64) -> f64 {
    if t < 0.0 {
        -(gamma * t).exp_m1()
    } else {
        0.0
    }
}
