//! Concrete models: linear Gaussian and stochastic volatility.
//!
//! Both share a scalar Gaussian AR(1) state process and a four-component
//! sufficient statistic whose first three entries are the AR(1) moments
//! `(x_t², x_t x_{t+1}, x_{t+1}²)`.

mod lg;
mod sv;

pub use lg::{LgBound, LinearGaussian};
pub use sv::{StochasticVolatility, SvBound};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::ssm::{LambdaVariant, StatVec};

/// Lower bound applied to every variance produced by an M-step.
pub const MIN_VARIANCE: f64 = 1e-8;

pub(crate) fn std_normal<F: Real, R: Rng + ?Sized>(rng: &mut R) -> F {
    F::of(rng.sample::<f64, _>(StandardNormal))
}

/// `x_{t+1} = coef · x_t + sd · V_t` with its density constants precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAr1<F> {
    pub coef: F,
    pub var: F,
    sd: F,
    inv_two_var: F,
    log_norm: F,
    peak: F,
}

impl<F: Real> GaussianAr1<F> {
    pub fn new(coef: F, var: F) -> Self {
        let two = F::of(2.0);
        let log_norm = -(F::ln_two_pi() + var.ln()) / two;
        GaussianAr1 {
            coef,
            var,
            sd: var.sqrt(),
            inv_two_var: F::one() / (two * var),
            log_norm,
            peak: log_norm.exp(),
        }
    }

    #[inline]
    pub fn log_density(&self, x: F, x_next: F) -> F {
        let d = x_next - self.coef * x;
        self.log_norm - d * d * self.inv_two_var
    }

    /// Written as `peak · exp(-…)` so the result never exceeds [`Self::peak`].
    #[inline]
    pub fn density(&self, x: F, x_next: F) -> F {
        let d = x_next - self.coef * x;
        self.peak * (-d * d * self.inv_two_var).exp()
    }

    /// Density at the conditional mean, `(2π var)^{-1/2}`.
    #[inline]
    pub fn peak(&self) -> F {
        self.peak
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, x: F, rng: &mut R) -> F {
        let mean = self.coef * x;
        if self.var == F::zero() {
            return mean;
        }
        mean + self.sd * std_normal::<F, R>(rng)
    }

    /// Standard deviation of the initial law: stationary when `|coef| < 1`,
    /// unit otherwise.
    pub fn initial_sd(&self) -> F {
        if self.coef.abs() < F::one() {
            (self.var / (F::one() - self.coef * self.coef)).sqrt()
        } else {
            F::one()
        }
    }
}

/// Shared closed-form M-step: `(ar coefficient, state variance, z4)`.
pub(crate) fn ar1_m_step<F: Real>(z: &StatVec<F>, variant: LambdaVariant) -> Result<[F; 3]> {
    if z.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: z.len() });
    }
    if !z.is_finite() {
        return Err(Error::DegenerateStatistic(format!("non-finite statistic {:?}", z.to_f64())));
    }
    for (i, name) in [(0, "z1"), (2, "z3"), (3, "z4")] {
        if z[i] <= F::zero() {
            return Err(Error::DegenerateStatistic(format!(
                "{name} = {} must be strictly positive",
                z[i]
            )));
        }
    }
    let floor = F::of(MIN_VARIANCE);
    let coef = match variant {
        LambdaVariant::Mle => z[1] / z[0],
        LambdaVariant::Paper => z[1] / z[2],
    };
    let var = (z[2] - z[1] * z[1] / z[0]).max(floor);
    Ok([coef, var, z[3].max(floor)])
}
