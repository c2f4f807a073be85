use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ar1_m_step, std_normal, GaussianAr1};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::ssm::{check_dim, BoundModel, LambdaVariant, ParamVec, StatVec, StateSpaceModel};

/// `X_{t+1} = φ X_t + σ V_t`, `Y_t = β exp(X_t / 2) U_t`.
///
/// Parameter order: `(phi, sigma2, beta2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StochasticVolatility {
    pub lambda: LambdaVariant,
}

impl StochasticVolatility {
    pub const PARAMS: [&'static str; 3] = ["phi", "sigma2", "beta2"];

    pub fn new(lambda: LambdaVariant) -> Self {
        StochasticVolatility { lambda }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SvBound<F> {
    pub transition: GaussianAr1<F>,
    beta2: F,
    beta: F,
    inv_two_beta2: F,
    log_norm: F,
}

impl<F: Real> SvBound<F> {
    pub fn beta2(&self) -> F {
        self.beta2
    }

    pub fn sample_observation<R: Rng + ?Sized>(&self, x: F, rng: &mut R) -> F {
        self.beta * (x / F::of(2.0)).exp() * std_normal::<F, R>(rng)
    }
}

impl<F: Real> StateSpaceModel<F> for StochasticVolatility {
    type Bound = SvBound<F>;

    fn id(&self) -> &'static str {
        "sv"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &Self::PARAMS
    }

    fn variance_components(&self) -> &'static [usize] {
        &[1, 2]
    }

    fn ar_component(&self) -> Option<usize> {
        Some(0)
    }

    fn stat_dim(&self) -> usize {
        4
    }

    fn bind(&self, theta: &ParamVec<F>) -> Result<SvBound<F>> {
        check_dim(3, theta.len())?;
        let (phi, s2, b2) = (theta[0], theta[1], theta[2]);
        for (i, v) in [(0usize, phi), (1, s2), (2, b2)] {
            if !v.is_finite() || (i > 0 && v < F::zero()) {
                return Err(Error::ParameterDomain {
                    name: Self::PARAMS[i],
                    value: v.as_f64(),
                    reason: "must be finite and nonnegative",
                });
            }
        }
        let two = F::of(2.0);
        Ok(SvBound {
            transition: GaussianAr1::new(phi, s2),
            beta2: b2,
            beta: b2.sqrt(),
            inv_two_beta2: F::one() / (two * b2),
            log_norm: -(F::ln_two_pi() + b2.ln()) / two,
        })
    }

    fn stat_increment(&self, x: F, x_next: F, y_next: F, out: &mut [F]) {
        out[0] = x * x;
        out[1] = x * x_next;
        out[2] = x_next * x_next;
        out[3] = y_next * y_next * (-x_next).exp();
    }

    fn m_step(&self, z: &StatVec<F>) -> Result<ParamVec<F>> {
        Ok(ParamVec(ar1_m_step(z, self.lambda)?.to_vec()))
    }
}

impl<F: Real> BoundModel<F> for SvBound<F> {
    #[inline]
    fn log_transition(&self, x: F, x_next: F) -> F {
        self.transition.log_density(x, x_next)
    }

    #[inline]
    fn transition(&self, x: F, x_next: F) -> F {
        self.transition.density(x, x_next)
    }

    fn transition_bound(&self) -> F {
        self.transition.peak()
    }

    /// `log N(y; 0, β² e^x)`.
    #[inline]
    fn log_emission(&self, x: F, y: F) -> F {
        self.log_norm - x / F::of(2.0) - y * y * (-x).exp() * self.inv_two_beta2
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        self.transition.initial_sd() * std_normal::<F, R>(rng)
    }

    #[inline]
    fn sample_transition<R: Rng + ?Sized>(&self, x: F, rng: &mut R) -> F {
        self.transition.sample(x, rng)
    }
}
