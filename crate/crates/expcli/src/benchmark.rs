//! Per-step cost of the PaRIS and FFBSm drivers as a function of N.
//!
//! Timing is strictly sequential; the per-step times come from the
//! monotonic clock inside the recursion and exclude all I/O.

use paris_em::online_em::StepSizeSchedule;
use paris_em::prelude::*;
use paris_em::rng::replicate_rng;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Median};

use crate::config::ModelId;
use crate::data::simulate;
use crate::error::{ExpError, Result};

pub const MIN_GRID_POINTS: usize = 4;
pub const MIN_GRID_SPAN: f64 = 8.0;
pub const MIN_REPETITIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub model: ModelId,
    /// Parameter used both to simulate the data and to start the recursion.
    pub theta: Vec<f64>,
    pub grid: Vec<usize>,
    /// Timed steps per repetition.
    pub steps: usize,
    /// Untimed steps before the timed ones.
    pub warmup: usize,
    pub repetitions: usize,
    pub backward_draws: usize,
    pub backward_mode: BackwardMode,
    pub algorithms: Vec<SmootherKind>,
    pub seed: u64,
}

impl BenchmarkConfig {
    pub fn new(model: ModelId, theta: Vec<f64>, grid: Vec<usize>) -> Self {
        BenchmarkConfig {
            model,
            theta,
            grid,
            steps: 20,
            warmup: 5,
            repetitions: MIN_REPETITIONS,
            backward_draws: 2,
            backward_mode: BackwardMode::AcceptReject,
            algorithms: vec![SmootherKind::Paris, SmootherKind::Ffbsm],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut sorted = self.grid.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() < MIN_GRID_POINTS {
            errs.push(crate::error::FieldError::new(
                "grid",
                format!("{} distinct values of N; at least {MIN_GRID_POINTS} are needed to fit a slope", sorted.len()),
            ));
        } else if sorted[0] == 0 || (*sorted.last().unwrap() as f64) < MIN_GRID_SPAN * sorted[0] as f64 {
            errs.push(crate::error::FieldError::new(
                "grid",
                format!("values must be positive and span at least {MIN_GRID_SPAN}x"),
            ));
        }
        if self.repetitions < MIN_REPETITIONS {
            errs.push(crate::error::FieldError::new("repetitions", format!("must be at least {MIN_REPETITIONS}")));
        }
        if self.steps == 0 {
            errs.push(crate::error::FieldError::new("steps", "must be at least 1"));
        }
        if self.backward_draws == 0 {
            errs.push(crate::error::FieldError::new("backward_draws", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            errs.push(crate::error::FieldError::new("algorithms", "nothing to time"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ExpError::Validation(errs))
        }
    }
}

/// Median per-step time of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub algorithm: SmootherKind,
    pub n: usize,
    pub repetition: usize,
    pub median_step_ns: f64,
    pub mean_trials: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmTiming {
    pub algorithm: SmootherKind,
    /// Median over repetitions of the per-repetition median step time,
    /// aligned with the grid.
    pub median_step_ns: Vec<f64>,
    /// Least-squares slope of log(time per step) against log(N).
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub grid: Vec<usize>,
    pub algorithms: Vec<AlgorithmTiming>,
    pub raw: Vec<TimingRow>,
}

impl BenchmarkReport {
    pub fn slope(&self, algorithm: SmootherKind) -> Option<f64> {
        self.algorithms.iter().find(|a| a.algorithm == algorithm).map(|a| a.slope)
    }

    pub fn raw_csv(&self) -> String {
        let mut s = String::from("algorithm,n,repetition,median_step_ns,mean_trials\n");
        for r in &self.raw {
            s.push_str(&format!(
                "{},{},{},{:.16e},{:.16e}\n",
                algo_name(r.algorithm),
                r.n,
                r.repetition,
                r.median_step_ns,
                r.mean_trials
            ));
        }
        s
    }
}

fn algo_name(a: SmootherKind) -> &'static str {
    match a {
        SmootherKind::Paris => "paris",
        SmootherKind::Ffbsm => "ffbsm",
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn median(v: Vec<f64>) -> f64 {
    Data::new(v).median()
}

struct Timer {
    model: ModelId,
    theta: ParamVec64,
    ys: Vec<f64>,
    warmup: usize,
    backward: BackwardSampleConfig,
}

impl Timer {
    fn new(model: ModelId, theta: &[f64], steps: usize, warmup: usize, backward: BackwardSampleConfig, seed: u64) -> Result<Self> {
        let theta = ParamVec(theta.to_vec());
        let ys = simulate(model, &theta, warmup + steps, seed)?;
        Ok(Timer { model, theta, ys, warmup, backward })
    }

    /// Median step time (ns) and mean accept-reject trials of one run.
    fn time(&self, algorithm: SmootherKind, n: usize, rng_seed: (u64, u64)) -> Result<(f64, f64)> {
        match self.model {
            ModelId::Lg => self.time_model(&LinearGaussian::default(), algorithm, n, rng_seed),
            ModelId::Sv => self.time_model(&StochasticVolatility::default(), algorithm, n, rng_seed),
        }
    }

    fn time_model<M: StateSpaceModel<f64>>(
        &self,
        model: &M,
        algorithm: SmootherKind,
        n: usize,
        (seed, rep): (u64, u64),
    ) -> Result<(f64, f64)> {
        let cfg = OnlineEmConfig::new(n, self.backward, StepSizeSchedule::new(0.6)?).with_algorithm(algorithm);
        let mut rng = replicate_rng(seed, rep);
        let mut state = init_online_em(model, &self.theta, self.ys[0], &cfg, &mut rng)?;
        let mut times = Vec::with_capacity(self.ys.len());
        let mut draws = 0;
        let mut trials = 0;
        for (i, &y) in self.ys[1..].iter().enumerate() {
            let before = state.backward;
            let (next, rec) = online_em_step(model, state, y, &cfg, &mut rng)?;
            state = next;
            if i >= self.warmup {
                times.push(rec.step_ns as f64);
                draws += state.backward.draws - before.draws;
                trials += state.backward.trials - before.trials;
            }
        }
        let mean_trials = if draws == 0 { 0.0 } else { trials as f64 / draws as f64 };
        Ok((median(times), mean_trials))
    }
}

/// Times every algorithm at every grid point and fits the log-log slopes.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let backward = BackwardSampleConfig::new(cfg.backward_draws, cfg.backward_mode)?;
    let timer = Timer::new(cfg.model, &cfg.theta, cfg.steps, cfg.warmup, backward, cfg.seed)?;
    let mut raw = Vec::new();
    let mut algorithms = Vec::new();
    let log_n: Vec<f64> = cfg.grid.iter().map(|&n| (n as f64).ln()).collect();
    for &algorithm in &cfg.algorithms {
        let mut medians = Vec::with_capacity(cfg.grid.len());
        for &n in &cfg.grid {
            let mut reps = Vec::with_capacity(cfg.repetitions);
            for rep in 0..cfg.repetitions {
                let (ns, mean_trials) = timer.time(algorithm, n, (cfg.seed, rep as u64))?;
                log::debug!("{} N={n} rep={rep}: {ns:.0} ns/step", algo_name(algorithm));
                raw.push(TimingRow { algorithm, n, repetition: rep, median_step_ns: ns, mean_trials });
                reps.push(ns);
            }
            medians.push(median(reps));
        }
        let log_t: Vec<f64> = medians.iter().map(|t| t.ln()).collect();
        let slope = ls_slope(&log_n, &log_t);
        log::info!("{}: slope {slope:.3}", algo_name(algorithm));
        algorithms.push(AlgorithmTiming { algorithm, median_step_ns: medians, slope });
    }
    Ok(BenchmarkReport { config: cfg.clone(), grid: cfg.grid.clone(), algorithms, raw })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetMatch {
    pub n_paris: usize,
    pub n_ffbsm: usize,
    pub paris_step_ns: f64,
    pub ffbsm_step_ns: f64,
    /// `ffbsm_step_ns / paris_step_ns`.
    pub ratio: f64,
    pub iterations: usize,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub model: ModelId,
    pub theta: Vec<f64>,
    pub n_paris: usize,
    pub backward_draws: usize,
    pub backward_mode: BackwardMode,
    pub steps: usize,
    pub warmup: usize,
    pub repetitions: usize,
    /// Accepted relative mismatch of the per-step times.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl BudgetConfig {
    pub fn new(model: ModelId, theta: Vec<f64>, n_paris: usize, backward_draws: usize) -> Self {
        BudgetConfig {
            model,
            theta,
            n_paris,
            backward_draws,
            backward_mode: BackwardMode::AcceptReject,
            steps: 40,
            warmup: 5,
            repetitions: MIN_REPETITIONS,
            tolerance: 0.2,
            max_iterations: 10,
            seed: 0,
        }
    }
}

/// Finds the FFBSm particle count whose per-step time matches PaRIS with
/// `n_paris` particles, by the quadratic-cost update
/// `N ← N·sqrt(t_paris / t_ffbsm)`.
pub fn match_budget(cfg: &BudgetConfig) -> Result<BudgetMatch> {
    if cfg.n_paris == 0 {
        return Err(ExpError::field("n_paris", "must be at least 1"));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(ExpError::field("tolerance", "must be positive"));
    }
    let backward = BackwardSampleConfig::new(cfg.backward_draws, cfg.backward_mode)?;
    let timer = Timer::new(cfg.model, &cfg.theta, cfg.steps, cfg.warmup, backward, cfg.seed)?;
    let time = |algo, n| -> Result<f64> {
        let reps = (0..cfg.repetitions.max(1))
            .map(|r| timer.time(algo, n, (cfg.seed, r as u64)).map(|t| t.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(median(reps))
    };
    let paris_ns = time(SmootherKind::Paris, cfg.n_paris)?;
    // FFBSm costs about N² kernel evaluations against PaRIS's K̃·N·trials
    let mut n = ((cfg.n_paris * cfg.backward_draws.max(1)) as f64).sqrt().ceil().max(1.0) as usize * 3;
    let mut tried = std::collections::BTreeMap::new();
    let mut best: Option<(usize, f64)> = None;
    for iteration in 1..=cfg.max_iterations.max(1) {
        let ffbsm_ns = match tried.get(&n) {
            Some(&t) => t,
            None => {
                let t = time(SmootherKind::Ffbsm, n)?;
                tried.insert(n, t);
                t
            }
        };
        let ratio = ffbsm_ns / paris_ns;
        if best.is_none_or(|(_, r): (usize, f64)| (r.ln()).abs() > ratio.ln().abs()) {
            best = Some((n, ratio));
        }
        log::info!("budget match {iteration}: N_ffbsm = {n}, time ratio {ratio:.3}");
        if (ratio - 1.0).abs() <= cfg.tolerance {
            return Ok(BudgetMatch {
                n_paris: cfg.n_paris,
                n_ffbsm: n,
                paris_step_ns: paris_ns,
                ffbsm_step_ns: ffbsm_ns,
                ratio,
                iterations: iteration,
                matched: true,
            });
        }
        let next = ((n as f64) * (1.0 / ratio).sqrt()).round().max(1.0) as usize;
        n = if next == n { if ratio > 1.0 { n.saturating_sub(1).max(1) } else { n + 1 } } else { next };
    }
    let (n_ffbsm, ratio) = best.expect("at least one iteration");
    Ok(BudgetMatch {
        n_paris: cfg.n_paris,
        n_ffbsm,
        paris_step_ns: paris_ns,
        ffbsm_step_ns: tried[&n_ffbsm],
        ratio,
        iterations: cfg.max_iterations,
        matched: false,
    })
}
