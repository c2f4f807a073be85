//! Particle-based online EM.
//!
//! Each observation triggers one filter step under the current parameter,
//! one stochastic-approximation update of the auxiliary statistics (PaRIS or
//! FFBSm) under that same parameter, and, once past burn-in, a closed-form
//! M-step on the smoothed statistic.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle::{effective_sample_size, init_filter, pf_step, WeightedParticleSet};
use crate::scalar::Real;
use crate::smoother::{
    online_stat_update, online_stat_update_ffbsm, smoothed_estimate, AuxStatMatrix, BackwardSampleConfig,
    BackwardStats,
};
use crate::ssm::{ParamVec, StateSpaceModel};

/// `γ_t = t^{-α}` with `α ∈ (0.5, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule<F> {
    alpha: F,
}

impl<F: Real> StepSizeSchedule<F> {
    pub fn new(alpha: F) -> Result<Self> {
        if alpha > F::of(0.5) && alpha <= F::one() {
            Ok(StepSizeSchedule { alpha })
        } else {
            Err(Error::Schedule(format!("exponent {alpha} is outside (0.5, 1]")))
        }
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn step_size(&self, t: usize) -> Result<F> {
        if t == 0 {
            return Err(Error::Schedule("step sizes are defined for t >= 1".into()));
        }
        Ok(F::from_usize(t).unwrap().powf(-self.alpha))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmootherKind {
    /// Sampled backward indices, linear cost.
    #[default]
    Paris,
    /// Exact backward expectation, quadratic cost.
    Ffbsm,
}

impl std::str::FromStr for SmootherKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paris" => Ok(SmootherKind::Paris),
            "ffbsm" => Ok(SmootherKind::Ffbsm),
            other => Err(Error::InvalidConfig(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineEmConfig<F> {
    pub n_particles: usize,
    pub backward: BackwardSampleConfig,
    pub schedule: StepSizeSchedule<F>,
    /// Parameters stay at their initial value for `t ≤ burn_in`.
    pub burn_in: usize,
    pub algorithm: SmootherKind,
    /// Components the M-step may change; `None` updates all of them.
    pub update_mask: Option<Vec<bool>>,
    /// Optional projection of the autoregressive coefficient onto `[-g, g]`.
    pub ar_guard: Option<F>,
}

impl<F: Real> OnlineEmConfig<F> {
    pub fn new(n_particles: usize, backward: BackwardSampleConfig, schedule: StepSizeSchedule<F>) -> Self {
        OnlineEmConfig {
            n_particles,
            backward,
            schedule,
            burn_in: 60,
            algorithm: SmootherKind::Paris,
            update_mask: None,
            ar_guard: None,
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_algorithm(mut self, algorithm: SmootherKind) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn with_update_mask(mut self, mask: Vec<bool>) -> Self {
        self.update_mask = Some(mask);
        self
    }
}

/// Everything the recursion carries from one observation to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineEmState<F> {
    pub theta: ParamVec<F>,
    pub set: WeightedParticleSet<F>,
    pub aux: AuxStatMatrix<F>,
    /// Cumulative backward sampling work.
    pub backward: BackwardStats,
    /// Number of M-steps skipped because the statistic was degenerate.
    pub held_m_steps: u64,
}

impl<F: Real> OnlineEmState<F> {
    pub fn t(&self) -> usize {
        self.set.t()
    }
}

/// One row of the estimation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord<F> {
    pub t: usize,
    pub theta: Vec<F>,
    pub ess: F,
    /// Accept-reject proposals per backward index at this step (0 if none).
    pub ar_trials_mean: f64,
    pub fallbacks: u64,
    pub step_ns: u64,
    /// The M-step was skipped because the statistic was degenerate.
    pub m_step_held: bool,
}

/// Filter initialized at `y0` under `theta0`, auxiliary statistics at zero.
pub fn init_online_em<F: Real, M: StateSpaceModel<F>, R: Rng + ?Sized>(
    model: &M,
    theta0: &ParamVec<F>,
    y0: F,
    cfg: &OnlineEmConfig<F>,
    rng: &mut R,
) -> Result<OnlineEmState<F>> {
    model.validate(theta0)?;
    if let Some(mask) = &cfg.update_mask {
        if mask.len() != model.param_dim() {
            return Err(Error::DimensionMismatch { expected: model.param_dim(), got: mask.len() });
        }
    }
    let bound = model.bind(theta0)?;
    let set = init_filter(&bound, y0, cfg.n_particles, rng).map_err(|e| e.with_theta(theta0.to_f64()))?;
    Ok(OnlineEmState {
        theta: theta0.clone(),
        aux: AuxStatMatrix::zeros(set.len(), model.stat_dim()),
        set,
        backward: BackwardStats::default(),
        held_m_steps: 0,
    })
}

fn apply_m_step<F: Real, M: StateSpaceModel<F>>(
    model: &M,
    proposal: ParamVec<F>,
    previous: &ParamVec<F>,
    cfg: &OnlineEmConfig<F>,
) -> ParamVec<F> {
    let mut theta = proposal;
    if let Some(mask) = &cfg.update_mask {
        for (i, &update) in mask.iter().enumerate() {
            if !update {
                theta[i] = previous[i];
            }
        }
    }
    if let (Some(g), Some(i)) = (cfg.ar_guard, model.ar_component()) {
        theta[i] = theta[i].max(-g).min(g);
    }
    theta
}

/// Processes one observation.
pub fn online_em_step<F: Real, M: StateSpaceModel<F>, R: Rng + ?Sized>(
    model: &M,
    state: OnlineEmState<F>,
    y_next: F,
    cfg: &OnlineEmConfig<F>,
    rng: &mut R,
) -> Result<(OnlineEmState<F>, TraceRecord<F>)> {
    let start = Instant::now();
    let t = state.t() + 1;
    let theta_f64 = || state.theta.to_f64();
    let bound = model.bind(&state.theta)?;
    let gamma = cfg.schedule.step_size(t)?;

    let (set, _) = pf_step(&bound, &state.set, y_next, rng).map_err(|e| e.with_theta(theta_f64()))?;
    let increment = |x: F, x_next: F, out: &mut [F]| model.stat_increment(x, x_next, y_next, out);
    let (aux, step_stats) = match cfg.algorithm {
        SmootherKind::Paris => {
            online_stat_update(&state.set, &state.aux, &set, &bound, increment, gamma, &cfg.backward, rng)
        }
        SmootherKind::Ffbsm => online_stat_update_ffbsm(&state.set, &state.aux, &set, &bound, increment, gamma)
            .map(|aux| (aux, BackwardStats::default())),
    }
    .map_err(|e| e.with_theta(theta_f64()))?;

    let mut held = false;
    let theta = if t > cfg.burn_in {
        match smoothed_estimate(&set, &aux).and_then(|z| model.m_step(&z)) {
            Ok(p) => apply_m_step(model, p, &state.theta, cfg),
            Err(Error::DegenerateStatistic(msg)) => {
                log::warn!("t = {t}: M-step skipped ({msg})");
                held = true;
                state.theta.clone()
            }
            Err(e) => return Err(e.with_theta(theta_f64())),
        }
    } else {
        state.theta.clone()
    };

    let mut backward = state.backward;
    backward.merge(step_stats);
    let record = TraceRecord {
        t,
        theta: theta.0.clone(),
        ess: effective_sample_size(&set),
        ar_trials_mean: step_stats.mean_trials(),
        fallbacks: step_stats.fallbacks,
        step_ns: 0,
        m_step_held: held,
    };
    let next = OnlineEmState {
        theta,
        set,
        aux,
        backward,
        held_m_steps: state.held_m_steps + held as u64,
    };
    let record = TraceRecord { step_ns: start.elapsed().as_nanos() as u64, ..record };
    Ok((next, record))
}

/// Final state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome<F> {
    pub theta: ParamVec<F>,
    pub state: OnlineEmState<F>,
    pub steps: usize,
}

/// Called after every step with the trace record, the new state and the
/// generator, so that traces can be streamed and checkpoints taken.
pub trait StepSink<F, R: ?Sized> {
    fn on_step(&mut self, record: &TraceRecord<F>, state: &OnlineEmState<F>, rng: &R) -> Result<()>;
}

impl<F, R: ?Sized, G> StepSink<F, R> for G
where
    G: FnMut(&TraceRecord<F>, &OnlineEmState<F>, &R) -> Result<()>,
{
    fn on_step(&mut self, record: &TraceRecord<F>, state: &OnlineEmState<F>, rng: &R) -> Result<()> {
        self(record, state, rng)
    }
}

/// Runs the recursion over `observations`; the first value initializes the
/// filter and every later one is one step. Only the current state is kept.
pub fn run_online_em<F, M, R, I, S>(
    model: &M,
    theta0: &ParamVec<F>,
    observations: I,
    cfg: &OnlineEmConfig<F>,
    rng: &mut R,
    sink: &mut S,
) -> Result<RunOutcome<F>>
where
    F: Real,
    M: StateSpaceModel<F>,
    R: Rng + ?Sized,
    I: IntoIterator<Item = F>,
    S: StepSink<F, R> + ?Sized,
{
    let mut obs = observations.into_iter();
    let y0 = obs
        .next()
        .ok_or_else(|| Error::InvalidConfig("observation stream is empty".into()))?;
    let state = init_online_em(model, theta0, y0, cfg, rng)?;
    let outcome = continue_online_em(model, state, obs, cfg, rng, sink)?;
    if outcome.steps == 0 {
        return Err(Error::InvalidConfig("observation stream must hold at least two values".into()));
    }
    Ok(outcome)
}

/// [`run_online_em`] with the exact quadratic-cost FFBSm statistic update.
pub fn run_ffbsm_online_em<F, M, R, I, S>(
    model: &M,
    theta0: &ParamVec<F>,
    observations: I,
    cfg: &OnlineEmConfig<F>,
    rng: &mut R,
    sink: &mut S,
) -> Result<RunOutcome<F>>
where
    F: Real,
    M: StateSpaceModel<F>,
    R: Rng + ?Sized,
    I: IntoIterator<Item = F>,
    S: StepSink<F, R> + ?Sized,
{
    let cfg = cfg.clone().with_algorithm(SmootherKind::Ffbsm);
    run_online_em(model, theta0, observations, &cfg, rng, sink)
}

/// Continues from an existing state, e.g. one restored from a checkpoint.
/// `observations` starts at `y_{t+1}`.
pub fn continue_online_em<F, M, R, I, S>(
    model: &M,
    mut state: OnlineEmState<F>,
    observations: I,
    cfg: &OnlineEmConfig<F>,
    rng: &mut R,
    sink: &mut S,
) -> Result<RunOutcome<F>>
where
    F: Real,
    M: StateSpaceModel<F>,
    R: Rng + ?Sized,
    I: IntoIterator<Item = F>,
    S: StepSink<F, R> + ?Sized,
{
    let mut steps = 0;
    for y in observations {
        let (next, record) = online_em_step(model, state, y, cfg, rng)?;
        state = next;
        steps += 1;
        sink.on_step(&record, &state, rng)?;
    }
    Ok(RunOutcome { theta: state.theta.clone(), state, steps })
}

/// Collects every trace record; convenient for short runs and tests.
pub fn collect_trace<F: Clone, R: ?Sized>(
    trace: &mut Vec<TraceRecord<F>>,
) -> impl FnMut(&TraceRecord<F>, &OnlineEmState<F>, &R) -> Result<()> + '_ {
    move |r, _, _| {
        trace.push(r.clone());
        Ok(())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Exact snapshot of a run: recursion state plus generator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<F, R> {
    pub version: u32,
    pub model: String,
    pub config: OnlineEmConfig<F>,
    pub state: OnlineEmState<F>,
    pub rng: R,
}

impl<F: Real, R: Serialize + serde::de::DeserializeOwned> Checkpoint<F, R> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Sink(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("checkpoint: {e}")))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        Ok(cp)
    }
}
