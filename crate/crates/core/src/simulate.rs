//! Data simulators for the shipped models.
//!
//! A horizon `T` produces `T + 1` states and observations, indexed `0..=T`,
//! i.e. `T` transitions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LinearGaussian, StochasticVolatility};
use crate::scalar::Real;
use crate::ssm::{BoundModel, ParamVec, StateSpaceModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath<F> {
    pub states: Vec<F>,
    pub observations: Vec<F>,
}

fn check_horizon(t: usize) -> Result<()> {
    if t == 0 {
        Err(Error::InvalidConfig("simulation horizon must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn warn_nonstationary<F: Real>(coef: F, x0: Option<F>) {
    if x0.is_none() && coef.abs() >= F::one() {
        log::warn!("|{coef}| >= 1 has no stationary law; drawing X_0 from N(0, 1)");
    }
}

/// `X_{t+1} = a X_t + σ_V V_t`, `Y_t = X_t + σ_U U_t`. `X_0` is `x0` if
/// given, else drawn from the stationary law (or `N(0, 1)` when `|a| ≥ 1`).
pub fn lg_simulate<F: Real, R: Rng + ?Sized>(
    theta: &ParamVec<F>,
    horizon: usize,
    x0: Option<F>,
    rng: &mut R,
) -> Result<SimulatedPath<F>> {
    check_horizon(horizon)?;
    let m = LinearGaussian::default().bind(theta)?;
    warn_nonstationary(theta[0], x0);
    let mut x = x0.unwrap_or_else(|| m.sample_initial(rng));
    let mut path = SimulatedPath {
        states: Vec::with_capacity(horizon + 1),
        observations: Vec::with_capacity(horizon + 1),
    };
    for t in 0..=horizon {
        if t > 0 {
            x = m.sample_transition(x, rng);
        }
        path.states.push(x);
        path.observations.push(m.sample_observation(x, rng));
    }
    Ok(path)
}

/// `X_{t+1} = φ X_t + σ V_t`, `Y_t = β exp(X_t / 2) U_t`.
pub fn sv_simulate<F: Real, R: Rng + ?Sized>(
    theta: &ParamVec<F>,
    horizon: usize,
    x0: Option<F>,
    rng: &mut R,
) -> Result<SimulatedPath<F>> {
    check_horizon(horizon)?;
    let m = StochasticVolatility::default().bind(theta)?;
    warn_nonstationary(theta[0], x0);
    let mut x = x0.unwrap_or_else(|| m.sample_initial(rng));
    let mut path = SimulatedPath {
        states: Vec::with_capacity(horizon + 1),
        observations: Vec::with_capacity(horizon + 1),
    };
    for t in 0..=horizon {
        if t > 0 {
            x = m.sample_transition(x, rng);
        }
        path.states.push(x);
        path.observations.push(m.sample_observation(x, rng));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_unit_root_is_constant() {
        let th = ParamVec::from_f64(&[1.0, 0.0, 0.0]);
        let p = lg_simulate(&th, 20, Some(2.5), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(p.states.iter().chain(&p.observations).all(|&v| v == 2.5));
        assert_eq!(p.states.len(), 21);
    }

    #[test]
    fn sv_without_state_noise_scales_white_noise() {
        let th = ParamVec::from_f64(&[0.7, 0.0, 0.25]);
        let p = sv_simulate(&th, 10, Some(0.0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(p.states.iter().all(|&x| x == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &y in &p.observations {
            let u: f64 = rng.sample(rand_distr::StandardNormal);
            assert_eq!(y, 0.5 * u);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let th = ParamVec::<f64>::from_f64(&[0.9, 0.1, 0.4]);
        let a = sv_simulate(&th, 100, None, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = sv_simulate(&th, 100, None, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
        let c = lg_simulate(&th, 100, None, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(c, lg_simulate(&th, 100, None, &mut ChaCha8Rng::seed_from_u64(8)).unwrap());
    }

    #[test]
    fn zero_horizon_rejected() {
        let th = ParamVec::<f64>::from_f64(&[0.9, 0.1, 0.4]);
        assert!(lg_simulate(&th, 0, None, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
