//! The state-space model contract.
//!
//! A model is split in two halves. [`StateSpaceModel`] carries everything that
//! does not depend on the parameter (names, dimensions, the sufficient
//! statistic and the closed-form M-step). [`BoundModel`] is the model with a
//! parameter plugged in: densities and samplers evaluated in the inner loops
//! of the filter and smoother, with all parameter-derived constants computed
//! once by [`StateSpaceModel::bind`].

use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parameter vector. Component names live on the owning model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVec<F>(pub Vec<F>);

impl<F: Real> ParamVec<F> {
    pub fn new(values: Vec<F>) -> Self {
        ParamVec(values)
    }

    pub fn from_f64(values: &[f64]) -> Self {
        ParamVec(values.iter().map(|&v| F::of(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.as_f64()).collect()
    }
}

impl<F> Index<usize> for ParamVec<F> {
    type Output = F;
    fn index(&self, i: usize) -> &F {
        &self.0[i]
    }
}

impl<F> IndexMut<usize> for ParamVec<F> {
    fn index_mut(&mut self, i: usize) -> &mut F {
        &mut self.0[i]
    }
}

/// Value of the additive sufficient statistic, one entry per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatVec<F>(pub Vec<F>);

impl<F: Real> StatVec<F> {
    pub fn zeros(dim: usize) -> Self {
        StatVec(vec![F::zero(); dim])
    }

    pub fn from_f64(values: &[f64]) -> Self {
        StatVec(values.iter().map(|&v| F::of(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.as_f64()).collect()
    }
}

impl<F> Index<usize> for StatVec<F> {
    type Output = F;
    fn index(&self, i: usize) -> &F {
        &self.0[i]
    }
}

/// Which closed form the M-step map uses for the autoregressive coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaVariant {
    /// Complete-data maximum likelihood: `z2 / z1`.
    #[default]
    Mle,
    /// `z2 / z3`, the form printed alongside the original algorithm.
    Paper,
}

impl std::str::FromStr for LambdaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(LambdaVariant::Mle),
            "paper" => Ok(LambdaVariant::Paper),
            other => Err(Error::InvalidConfig(format!(
                "unknown lambda variant `{other}` (expected `mle` or `paper`)"
            ))),
        }
    }
}

/// Parameter-independent half of a state-space model.
pub trait StateSpaceModel<F: Real>: Send + Sync {
    type Bound: BoundModel<F>;

    /// Short identifier used in config files ("lg", "sv").
    fn id(&self) -> &'static str;

    fn param_names(&self) -> &'static [&'static str];

    fn param_dim(&self) -> usize {
        self.param_names().len()
    }

    /// Indices of the parameter components that are variances.
    fn variance_components(&self) -> &'static [usize];

    /// Index of the autoregressive coefficient, if the model has one.
    fn ar_component(&self) -> Option<usize> {
        None
    }

    /// Number of sufficient-statistic components.
    fn stat_dim(&self) -> usize;

    fn state_dim(&self) -> usize {
        1
    }

    /// Plug a parameter in. Zero variances are accepted here so that the
    /// samplers can run degenerate dynamics; negative or non-finite values
    /// are rejected.
    fn bind(&self, theta: &ParamVec<F>) -> Result<Self::Bound>;

    /// Sufficient-statistic increment on the transition `(x, x_next)` with
    /// the observation `y_next` emitted at `x_next`.
    fn stat_increment(&self, x: F, x_next: F, y_next: F, out: &mut [F]);

    /// Closed-form M-step.
    fn m_step(&self, z: &StatVec<F>) -> Result<ParamVec<F>>;

    /// Checks dimension and positivity; the strict domain required for
    /// density evaluation.
    fn validate(&self, theta: &ParamVec<F>) -> Result<()> {
        check_dim(self.param_dim(), theta.len())?;
        let names = self.param_names();
        for (i, v) in theta.0.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::ParameterDomain {
                    name: names[i],
                    value: v.as_f64(),
                    reason: "must be finite",
                });
            }
        }
        for &i in self.variance_components() {
            if theta[i] <= F::zero() {
                return Err(Error::ParameterDomain {
                    name: names[i],
                    value: theta[i].as_f64(),
                    reason: "variance must be strictly positive",
                });
            }
        }
        Ok(())
    }
}

/// A model with its parameter fixed.
pub trait BoundModel<F: Real>: Send + Sync {
    fn log_transition(&self, x: F, x_next: F) -> F;

    fn transition(&self, x: F, x_next: F) -> F {
        self.log_transition(x, x_next).exp()
    }

    /// Upper bound on the transition density over all pairs of states.
    fn transition_bound(&self) -> F;

    fn log_emission(&self, x: F, y: F) -> F;

    fn emission(&self, x: F, y: F) -> F {
        self.log_emission(x, y).exp()
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> F;

    fn sample_transition<R: Rng + ?Sized>(&self, x: F, rng: &mut R) -> F;
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub fn transition_density<F: Real, M: StateSpaceModel<F>>(
    model: &M,
    theta: &ParamVec<F>,
    x: F,
    x_next: F,
) -> Result<F> {
    model.validate(theta)?;
    Ok(model.bind(theta)?.transition(x, x_next))
}

pub fn transition_bound<F: Real, M: StateSpaceModel<F>>(model: &M, theta: &ParamVec<F>) -> Result<F> {
    model.validate(theta)?;
    Ok(model.bind(theta)?.transition_bound())
}

pub fn emission_density<F: Real, M: StateSpaceModel<F>>(
    model: &M,
    theta: &ParamVec<F>,
    x: F,
    y: F,
) -> Result<F> {
    model.validate(theta)?;
    Ok(model.bind(theta)?.emission(x, y))
}

pub fn sample_transition<F: Real, M: StateSpaceModel<F>, R: Rng + ?Sized>(
    model: &M,
    theta: &ParamVec<F>,
    x: F,
    rng: &mut R,
) -> Result<F> {
    Ok(model.bind(theta)?.sample_transition(x, rng))
}

pub fn sample_initial<F: Real, M: StateSpaceModel<F>, R: Rng + ?Sized>(
    model: &M,
    theta: &ParamVec<F>,
    rng: &mut R,
) -> Result<F> {
    Ok(model.bind(theta)?.sample_initial(rng))
}

pub fn stat_increment<F: Real, M: StateSpaceModel<F>>(model: &M, x: F, x_next: F, y_next: F) -> StatVec<F> {
    let mut out = vec![F::zero(); model.stat_dim()];
    model.stat_increment(x, x_next, y_next, &mut out);
    StatVec(out)
}

pub fn m_step<F: Real, M: StateSpaceModel<F>>(model: &M, z: &StatVec<F>) -> Result<ParamVec<F>> {
    model.m_step(z)
}
