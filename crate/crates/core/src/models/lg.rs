use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ar1_m_step, std_normal, GaussianAr1};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::ssm::{check_dim, BoundModel, LambdaVariant, ParamVec, StatVec, StateSpaceModel};

/// `X_{t+1} = a X_t + σ_V V_t`, `Y_t = X_t + σ_U U_t`.
///
/// Parameter order: `(a, sigma_v2, sigma_u2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussian {
    pub lambda: LambdaVariant,
}

impl LinearGaussian {
    pub const PARAMS: [&'static str; 3] = ["a", "sigma_v2", "sigma_u2"];

    pub fn new(lambda: LambdaVariant) -> Self {
        LinearGaussian { lambda }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LgBound<F> {
    pub transition: GaussianAr1<F>,
    obs_var: F,
    obs_sd: F,
    obs_inv_two_var: F,
    obs_log_norm: F,
}

impl<F: Real> LgBound<F> {
    pub fn obs_var(&self) -> F {
        self.obs_var
    }

    /// Observation noise draw, used by the simulator.
    pub fn sample_observation<R: Rng + ?Sized>(&self, x: F, rng: &mut R) -> F {
        if self.obs_var == F::zero() {
            return x;
        }
        x + self.obs_sd * std_normal::<F, R>(rng)
    }
}

impl<F: Real> StateSpaceModel<F> for LinearGaussian {
    type Bound = LgBound<F>;

    fn id(&self) -> &'static str {
        "lg"
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

    fn bind(&self, theta: &ParamVec<F>) -> Result<LgBound<F>> {
        check_dim(3, theta.len())?;
        let (a, sv2, su2) = (theta[0], theta[1], theta[2]);
        for (i, v) in [(0usize, a), (1, sv2), (2, su2)] {
            if !v.is_finite() || (i > 0 && v < F::zero()) {
                return Err(Error::ParameterDomain {
                    name: Self::PARAMS[i],
                    value: v.as_f64(),
                    reason: "must be finite and nonnegative",
                });
            }
        }
        let two = F::of(2.0);
        Ok(LgBound {
            transition: GaussianAr1::new(a, sv2),
            obs_var: su2,
            obs_sd: su2.sqrt(),
            obs_inv_two_var: F::one() / (two * su2),
            obs_log_norm: -(F::ln_two_pi() + su2.ln()) / two,
        })
    }

    fn stat_increment(&self, x: F, x_next: F, y_next: F, out: &mut [F]) {
        let r = y_next - x_next;
        out[0] = x * x;
        out[1] = x * x_next;
        out[2] = x_next * x_next;
        out[3] = r * r;
    }

    fn m_step(&self, z: &StatVec<F>) -> Result<ParamVec<F>> {
        Ok(ParamVec(ar1_m_step(z, self.lambda)?.to_vec()))
    }
}

impl<F: Real> BoundModel<F> for LgBound<F> {
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

    #[inline]
    fn log_emission(&self, x: F, y: F) -> F {
        let d = y - x;
        self.obs_log_norm - d * d * self.obs_inv_two_var
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        self.transition.initial_sd() * std_normal::<F, R>(rng)
    }

    #[inline]
    fn sample_transition<R: Rng + ?Sized>(&self, x: F, rng: &mut R) -> F {
        self.transition.sample(x, rng)
    }
}
