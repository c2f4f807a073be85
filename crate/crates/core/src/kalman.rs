//! Exact references for the scalar linear Gaussian model.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{GaussianAr1, LinearGaussian};
use crate::scalar::Real;
use crate::ssm::{ParamVec, StatVec, StateSpaceModel};

/// Law of the first state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialLaw<F> {
    /// The particle filter's initial law: stationary when `|a| < 1`, else `N(0, 1)`.
    Stationary,
    Fixed { mean: F, var: F },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanOptions<F> {
    pub prior: InitialLaw<F>,
    /// Whether `y_0` is conditioned on. When false the first observation is
    /// ignored entirely (likelihood and posterior are for `y_{1:T}`).
    pub condition_on_first: bool,
}

impl<F: Real> Default for KalmanOptions<F> {
    fn default() -> Self {
        KalmanOptions { prior: InitialLaw::Stationary, condition_on_first: true }
    }
}

impl<F: Real> KalmanOptions<F> {
    /// Setting under which the closed-form M-step is the exact maximizer of
    /// the EM intermediate quantity: a parameter-free prior `N(0, 1)` on
    /// `X_0` and no dependence on `y_0`.
    pub fn batch_em() -> Self {
        KalmanOptions {
            prior: InitialLaw::Fixed { mean: F::zero(), var: F::one() },
            condition_on_first: false,
        }
    }
}

/// Filtered and one-step predicted moments for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanState<F> {
    pub predicted_mean: Vec<F>,
    pub predicted_var: Vec<F>,
    pub filtered_mean: Vec<F>,
    pub filtered_var: Vec<F>,
    /// Exact log-likelihood of the conditioned observations.
    pub log_likelihood: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMoments<F> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
    /// `Cov(X_t, X_{t+1} | Y)` for `t = 0..T`.
    pub lag_one_cov: Vec<F>,
}

struct LgScalars<F> {
    a: F,
    sv2: F,
    su2: F,
}

fn scalars<F: Real>(theta: &ParamVec<F>) -> Result<LgScalars<F>> {
    <LinearGaussian as StateSpaceModel<F>>::validate(&LinearGaussian::default(), theta)?;
    Ok(LgScalars { a: theta[0], sv2: theta[1], su2: theta[2] })
}

pub fn kalman_filter<F: Real>(theta: &ParamVec<F>, observations: &[F]) -> Result<KalmanState<F>> {
    kalman_filter_with(theta, observations, &KalmanOptions::default())
}

pub fn kalman_filter_with<F: Real>(
    theta: &ParamVec<F>,
    observations: &[F],
    opts: &KalmanOptions<F>,
) -> Result<KalmanState<F>> {
    let LgScalars { a, sv2, su2 } = scalars(theta)?;
    let (m0, p0) = match opts.prior {
        InitialLaw::Stationary => {
            let sd = GaussianAr1::new(a, sv2).initial_sd();
            (F::zero(), sd * sd)
        }
        InitialLaw::Fixed { mean, var } => (mean, var),
    };
    let n = observations.len();
    let mut st = KalmanState {
        predicted_mean: Vec::with_capacity(n),
        predicted_var: Vec::with_capacity(n),
        filtered_mean: Vec::with_capacity(n),
        filtered_var: Vec::with_capacity(n),
        log_likelihood: F::zero(),
    };
    let half = F::of(0.5);
    let (mut mp, mut pp) = (m0, p0);
    for (t, &y) in observations.iter().enumerate() {
        if t > 0 {
            let (mf, pf) = (st.filtered_mean[t - 1], st.filtered_var[t - 1]);
            mp = a * mf;
            pp = a * a * pf + sv2;
        }
        st.predicted_mean.push(mp);
        st.predicted_var.push(pp);
        if t == 0 && !opts.condition_on_first {
            st.filtered_mean.push(mp);
            st.filtered_var.push(pp);
            continue;
        }
        let s = pp + su2;
        let innov = y - mp;
        let gain = pp / s;
        st.filtered_mean.push(mp + gain * innov);
        st.filtered_var.push(pp * su2 / s);
        st.log_likelihood -= half * (F::ln_two_pi() + s.ln() + innov * innov / s);
    }
    Ok(st)
}

/// Rauch–Tung–Striebel backward pass with lag-one covariances.
pub fn rts_smoother<F: Real>(theta: &ParamVec<F>, kf: &KalmanState<F>) -> Result<SmoothedMoments<F>> {
    let a = scalars(theta)?.a;
    let n = kf.filtered_mean.len();
    let mut mean = kf.filtered_mean.clone();
    let mut var = kf.filtered_var.clone();
    let mut lag_one_cov = vec![F::zero(); n.saturating_sub(1)];
    for t in (0..n.saturating_sub(1)).rev() {
        let j = kf.filtered_var[t] * a / kf.predicted_var[t + 1];
        mean[t] = kf.filtered_mean[t] + j * (mean[t + 1] - kf.predicted_mean[t + 1]);
        var[t] = kf.filtered_var[t] + j * j * (var[t + 1] - kf.predicted_var[t + 1]);
        lag_one_cov[t] = j * var[t + 1];
    }
    Ok(SmoothedMoments { mean, var, lag_one_cov })
}

/// `E[Σ_{t<T} s̃_t(X_t, X_{t+1}) | Y_{0:T}]` under the default Kalman options.
pub fn lg_exact_smoothed_stats<F: Real>(theta: &ParamVec<F>, observations: &[F]) -> Result<StatVec<F>> {
    lg_exact_smoothed_stats_with(theta, observations, &KalmanOptions::default())
}

pub fn lg_exact_smoothed_stats_with<F: Real>(
    theta: &ParamVec<F>,
    observations: &[F],
    opts: &KalmanOptions<F>,
) -> Result<StatVec<F>> {
    let kf = kalman_filter_with(theta, observations, opts)?;
    let sm = rts_smoother(theta, &kf)?;
    let mut z = [F::zero(); 4];
    for t in 0..observations.len().saturating_sub(1) {
        let (m0, m1) = (sm.mean[t], sm.mean[t + 1]);
        let r = observations[t + 1] - m1;
        z[0] += m0 * m0 + sm.var[t];
        z[1] += m0 * m1 + sm.lag_one_cov[t];
        z[2] += m1 * m1 + sm.var[t + 1];
        z[3] += r * r + sm.var[t + 1];
    }
    Ok(StatVec(z.to_vec()))
}

/// Exact log-likelihood by prediction-error decomposition.
pub fn lg_log_likelihood<F: Real>(theta: &ParamVec<F>, observations: &[F], opts: &KalmanOptions<F>) -> Result<F> {
    Ok(kalman_filter_with(theta, observations, opts)?.log_likelihood)
}

/// One exact batch EM iteration: smoothed statistics under `theta`,
/// normalized by `T`, mapped through the MLE M-step. Uses
/// [`KalmanOptions::batch_em`], for which this is a genuine EM step and the
/// likelihood returned by [`lg_log_likelihood`] with the same options cannot
/// decrease.
pub fn lg_batch_em_step<F: Real>(theta: &ParamVec<F>, observations: &[F]) -> Result<ParamVec<F>> {
    let opts = KalmanOptions::batch_em();
    let z = lg_exact_smoothed_stats_with(theta, observations, &opts)?;
    let t = F::from_usize(observations.len() - 1).unwrap();
    let z = StatVec(z.0.into_iter().map(|v| v / t).collect());
    LinearGaussian::default().m_step(&z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(v: [f64; 3]) -> ParamVec<f64> {
        ParamVec::from_f64(&v)
    }

    #[test]
    fn single_observation_is_conjugate_update() {
        let th = theta([0.8, 0.36, 0.5]);
        let kf = kalman_filter(&th, &[1.2]).unwrap();
        // stationary prior variance 0.36 / 0.36 = 1
        assert!((kf.filtered_mean[0] - 1.2 / 1.5).abs() < 1e-15);
        assert!((kf.filtered_var[0] - 0.5 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn uninformative_observations_leave_prediction() {
        let th = theta([0.9, 0.2, 1e12]);
        let kf = kalman_filter(&th, &[3.0, -2.0, 5.0, 0.5]).unwrap();
        for t in 0..4 {
            assert!((kf.filtered_mean[t] - kf.predicted_mean[t]).abs() < 1e-4);
        }
    }

    #[test]
    fn one_step_horizon_smoothed_equals_filtered() {
        let th = theta([0.5, 1.0, 1.0]);
        let kf = kalman_filter(&th, &[0.7]).unwrap();
        let sm = rts_smoother(&th, &kf).unwrap();
        assert_eq!(sm.mean, kf.filtered_mean);
        assert_eq!(sm.var, kf.filtered_var);
        assert!(sm.lag_one_cov.is_empty());
    }

    #[test]
    fn smoothing_never_increases_variance() {
        let th = theta([0.95, 0.3, 0.6]);
        let ys: Vec<f64> = (0..40).map(|t| ((t * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let kf = kalman_filter(&th, &ys).unwrap();
        let sm = rts_smoother(&th, &kf).unwrap();
        for t in 0..ys.len() {
            assert!(sm.var[t] <= kf.filtered_var[t] + 1e-15);
        }
    }

    #[test]
    fn nearly_frozen_state_pins_statistics() {
        // a = 0 and σ_V² → 0: X_t ≈ 0 for t ≥ 1, so only z4 = Σ y_{t+1}² survives
        let th = theta([0.0, 1e-12, 1.0]);
        let ys = [0.4, 1.0, -2.0, 0.5];
        let z = lg_exact_smoothed_stats(&th, &ys).unwrap();
        assert!(z[1].abs() < 1e-4 && z[2].abs() < 1e-4);
        assert!((z[3] - (1.0 + 4.0 + 0.25)).abs() < 1e-4);
    }
}
