//! The eleven-compartment DELPHI model.
//!
//! The population moves through susceptible (`S`), exposed (`E`) and
//! infectious (`I`) states and then branches six ways, depending on whether the
//! case is detected, whether a detected case is hospitalized or quarantined,
//! and whether it ends in recovery or death:
//!
//! ```text
//!                       ┌─> U_R ──────────────> R
//!                       ├─> U_D ──────────────> D
//!  S ──> E ──> I ──────>├─> DH_R (hospital) ──> R
//!                       ├─> DH_D (hospital) ──> D
//!                       ├─> DQ_R (quarantine) > R
//!                       └─> DQ_D (quarantine) > D
//! ```
//!
//! Transmission is damped over time by the government-response multiplier
//! [`gamma`]. Trajectories are computed with fixed-step fourth-order
//! Runge-Kutta so that the same inputs always produce the same numbers.

mod integrate;
mod params;
mod state;

pub use integrate::{integrate, integrate_with, Observables, Trajectory};
pub use params::{ClinicalRates, DelphiParams, FittedParams, FITTED_PARAM_NAMES};
pub use state::{derivatives, derivatives_at, initial_state, CompartmentState, COMPARTMENTS};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid integration grid: {0}")]
    InvalidGrid(String),
    #[error("compartment {compartment} fell to {value} at t = {t} (step too large?)")]
    NegativeState {
        compartment: &'static str,
        value: f64,
        t: f64,
    },
}

/// Government-response multiplier on the infection rate,
/// `γ(t) = 2/π · arctan(-(t - t0) / k) + 1`.
///
/// `t0` is the day the response starts biting and `k` its strength in days.
/// The curve decreases strictly from 2 (as `t → -∞`) to 0 (as `t → ∞`) and is
/// exactly 1 at `t0`.
pub fn gamma(t: f64, t0: f64, k: f64) -> Result<f64, ModelError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(ModelError::InvalidParameter {
            name: "k",
            reason: format!("response strength must be positive, got {k}"),
        });
    }
    Ok(gamma_unchecked(t, t0, k))
}

#[inline]
pub(crate) fn gamma_unchecked(t: f64, t0: f64, k: f64) -> f64 {
    std::f64::consts::FRAC_2_PI * (-(t - t0) / k).atan() + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_fixed_points() {
        assert_eq!(gamma(12.0, 12.0, 5.0).unwrap(), 1.0);
        assert!((gamma(17.0, 12.0, 5.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((gamma(7.0, 12.0, 5.0).unwrap() - 1.5).abs() < 1e-12);
        assert!((gamma(-1e15, 0.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(gamma(1e15, 0.0, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gamma_rejects_nonpositive_strength() {
        assert!(gamma(0.0, 0.0, 0.0).is_err());
        assert!(gamma(0.0, 0.0, -3.0).is_err());
        assert!(gamma(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn gamma_is_strictly_decreasing() {
        let mut prev = gamma(-50.0, 3.0, 7.0).unwrap();
        for i in 1..=400 {
            let t = -50.0 + i as f64 * 0.5;
            let g = gamma(t, 3.0, 7.0).unwrap();
            assert!(g < prev, "not decreasing at t = {t}");
            assert!(g > 0.0 && g < 2.0);
            prev = g;
        }
    }
}
