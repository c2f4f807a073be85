//! Particle-based online EM for general state-space models.
//!
//! The crate combines a bootstrap particle filter with two forward-only
//! smoothers of additive functionals: the quadratic-cost FFBSm recursion and
//! the linear-cost PaRIS recursion, whose backward indices are drawn by
//! accept-reject. Plugged into a stochastic-approximation update of the
//! sufficient statistics and a closed-form M-step, they give an online EM
//! algorithm that processes each observation once with memory independent of
//! the number of observations.
//!
//! Numerics are generic over [`Real`] (`f32` or `f64`); the `*64` aliases at
//! the crate root fix the scalar to `f64`.
//!
//! ```
//! use paris_em::prelude::*;
//! use rand::SeedableRng;
//!
//! let model = LinearGaussian::default();
//! let truth = ParamVec64::from_f64(&[0.8, 0.16, 0.81]);
//! let data = lg_simulate(&truth, 500, None, &mut SimRng::seed_from_u64(1)).unwrap();
//! let cfg = OnlineEmConfig::new(
//!     100,
//!     BackwardSampleConfig::default(),
//!     StepSizeSchedule::new(0.6).unwrap(),
//! );
//! let theta0 = ParamVec64::from_f64(&[0.1, 4.0, 0.81]);
//! let mut rng = SimRng::seed_from_u64(2);
//! let mut trace = Vec::new();
//! let out = run_online_em(&model, &theta0, data.observations, &cfg, &mut rng, &mut collect_trace(&mut trace))
//!     .unwrap();
//! assert_eq!(trace.len(), 500);
//! assert!(out.theta[0] > 0.1);
//! ```

pub mod error;
pub mod kalman;
pub mod models;
pub mod online_em;
pub mod particle;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod smoother;
pub mod ssm;
pub mod tables;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ParamVec64 = ssm::ParamVec<f64>;
pub type StatVec64 = ssm::StatVec<f64>;
pub type ParticleSet64 = particle::WeightedParticleSet<f64>;
pub type AuxStatMatrix64 = smoother::AuxStatMatrix<f64>;
pub type OnlineEmConfig64 = online_em::OnlineEmConfig<f64>;
pub type OnlineEmState64 = online_em::OnlineEmState<f64>;
pub type TraceRecord64 = online_em::TraceRecord<f64>;
pub type KalmanState64 = kalman::KalmanState<f64>;

pub type ParamVec32 = ssm::ParamVec<f32>;
pub type ParticleSet32 = particle::WeightedParticleSet<f32>;
pub type OnlineEmState32 = online_em::OnlineEmState<f32>;

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::kalman::{
        kalman_filter, kalman_filter_with, lg_batch_em_step, lg_exact_smoothed_stats, lg_exact_smoothed_stats_with,
        lg_log_likelihood, rts_smoother, InitialLaw, KalmanOptions,
    };
    pub use crate::models::{LinearGaussian, StochasticVolatility};
    pub use crate::online_em::{
        collect_trace, continue_online_em, init_online_em, online_em_step, run_ffbsm_online_em, run_online_em,
        OnlineEmConfig, OnlineEmState, SmootherKind, StepSizeSchedule, TraceRecord,
    };
    pub use crate::particle::{
        effective_sample_size, init_filter, pf_step, self_normalized_estimate, WeightedParticleSet,
    };
    pub use crate::rng::SimRng;
    pub use crate::scalar::Real;
    pub use crate::simulate::{lg_simulate, sv_simulate, SimulatedPath};
    pub use crate::smoother::{
        ffbsm_update, online_stat_update, online_stat_update_ffbsm, paris_update, smoothed_estimate,
        AuxStatMatrix, BackwardMode, BackwardSampleConfig,
    };
    pub use crate::ssm::{BoundModel, LambdaVariant, ParamVec, StatVec, StateSpaceModel};
    pub use crate::{AuxStatMatrix64, OnlineEmConfig64, OnlineEmState64, ParamVec64, ParticleSet64, StatVec64, TraceRecord64};
}
