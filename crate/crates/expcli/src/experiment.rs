//! Replicated estimation runs over one dataset.

use std::path::{Path, PathBuf};
use std::time::Instant;

use paris_em::online_em::continue_online_em;
use paris_em::prelude::*;
use paris_em::rng::replicate_rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use statrs::statistics::{Data, Max, Median, Min, OrderStatistics, Statistics};

use crate::config::{DataSource, ExperimentConfig, ModelId};
use crate::data::{self, fmt_f64};
use crate::error::{ExpError, Result};
use crate::summarize::{summarize_traces, TailSummary};
use crate::trace::{read_checkpoint, TraceWriter};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Continue each replicate from its checkpoint when one exists.
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplicateStatus {
    Ok,
    Degenerate,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateReport {
    pub index: usize,
    pub seed: u64,
    pub status: ReplicateStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub trace: PathBuf,
    pub final_theta: Option<Vec<f64>>,
    pub steps: usize,
    pub resumed_from: Option<usize>,
    pub held_m_steps: u64,
    pub backward_draws: u64,
    pub backward_trials: u64,
    pub backward_fallbacks: u64,
    pub mean_trials: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub observations: usize,
    pub replicates: Vec<ReplicateReport>,
    pub summary: PathBuf,
    pub manifest: PathBuf,
    pub tail_summary: Option<TailSummary>,
}

impl ExperimentReport {
    pub fn status(&self) -> ReplicateStatus {
        let any = |s| self.replicates.iter().any(|r| r.status == s);
        if any(ReplicateStatus::Degenerate) {
            ReplicateStatus::Degenerate
        } else if any(ReplicateStatus::Failed) {
            ReplicateStatus::Failed
        } else {
            ReplicateStatus::Ok
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status() {
            ReplicateStatus::Ok => 0,
            ReplicateStatus::Degenerate => 3,
            ReplicateStatus::Failed => 1,
        }
    }

    pub fn final_thetas(&self) -> Vec<Vec<f64>> {
        self.replicates.iter().filter_map(|r| r.final_theta.clone()).collect()
    }

    pub fn trace_paths(&self) -> Vec<PathBuf> {
        self.replicates.iter().map(|r| r.trace.clone()).collect()
    }
}

pub fn trace_file(dir: &Path, replicate: usize) -> PathBuf {
    dir.join(format!("trace_r{replicate:03}.csv"))
}

pub fn checkpoint_file(dir: &Path, replicate: usize) -> PathBuf {
    dir.join(format!("checkpoint_r{replicate:03}.json"))
}

/// Observations `y_{0:T}` for the experiment, plus a description for the
/// manifest. Simulated data are written to `dir/data.csv`.
fn load_observations(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<f64>, serde_json::Value)> {
    match &cfg.data {
        DataSource::Simulate => {
            let (ys, sidecar) = data::simulate_for(cfg)?;
            let path = dir.join("data.csv");
            data::write_data(&path, &ys, Some(&sidecar))?;
            Ok((ys, json!({ "source": "simulate", "path": path, "sidecar": sidecar })))
        }
        DataSource::Csv { path } => {
            let mut ys = data::read_data(path)?;
            if let Some(h) = cfg.horizon {
                if ys.len() < h + 1 {
                    return Err(ExpError::field(
                        "horizon",
                        format!("{h} steps need {} observations but {} holds {}", h + 1, path.display(), ys.len()),
                    ));
                }
                ys.truncate(h + 1);
            }
            let sidecar = data::read_sidecar(path)?;
            Ok((ys, json!({ "source": "csv", "path": path, "sidecar": sidecar })))
        }
    }
}

struct ReplicateRun<'a> {
    cfg: &'a ExperimentConfig,
    em: &'a OnlineEmConfig64,
    ys: &'a [f64],
    dir: &'a Path,
    opts: RunOptions,
}

impl ReplicateRun<'_> {
    fn run(&self, index: usize) -> ReplicateReport {
        let seed = self.cfg.seed.wrapping_add(index as u64);
        let start = Instant::now();
        let trace = trace_file(self.dir, index);
        let result = match self.cfg.model {
            ModelId::Lg => self.run_model(&LinearGaussian::new(self.cfg.lambda_variant), index, &trace),
            ModelId::Sv => self.run_model(&StochasticVolatility::new(self.cfg.lambda_variant), index, &trace),
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut report = ReplicateReport {
            index,
            seed,
            status: ReplicateStatus::Ok,
            message: None,
            trace,
            final_theta: None,
            steps: 0,
            resumed_from: None,
            held_m_steps: 0,
            backward_draws: 0,
            backward_trials: 0,
            backward_fallbacks: 0,
            mean_trials: 0.0,
            wall_ms,
        };
        match result {
            Ok((state, resumed_from)) => {
                report.final_theta = Some(state.theta.0.clone());
                report.steps = state.t();
                report.resumed_from = resumed_from;
                report.held_m_steps = state.held_m_steps;
                report.backward_draws = state.backward.draws;
                report.backward_trials = state.backward.trials;
                report.backward_fallbacks = state.backward.fallbacks;
                report.mean_trials = state.backward.mean_trials();
            }
            Err(e) => {
                report.status = match &e {
                    ExpError::Core(c) if c.is_degeneracy() => ReplicateStatus::Degenerate,
                    _ => ReplicateStatus::Failed,
                };
                log::error!("replicate {index}: {e}");
                report.message = Some(e.to_string());
            }
        }
        report
    }

    fn run_model<M: StateSpaceModel<f64>>(
        &self,
        model: &M,
        index: usize,
        trace: &Path,
    ) -> Result<(OnlineEmState64, Option<usize>)> {
        let names = model.param_names();
        let ckpt = checkpoint_file(self.dir, index);
        let theta0 = self.cfg.theta0_vec();

        let restored = if self.opts.resume && ckpt.exists() {
            let cp = read_checkpoint(&ckpt)?;
            if cp.model != model.id() || cp.config != *self.em {
                return Err(ExpError::Other(format!(
                    "{} was written under a different model or configuration",
                    ckpt.display()
                )));
            }
            Some(cp)
        } else {
            None
        };

        let (mut writer, state, mut rng, resumed_from) = match restored {
            Some(cp) => {
                let t = cp.state.t();
                if t + 1 > self.ys.len() {
                    return Err(ExpError::Other(format!("{} is past the end of the data", ckpt.display())));
                }
                let w = TraceWriter::resume(trace, names, t, model.id(), self.em)?;
                log::info!("replicate {index}: resuming at t = {t}");
                (w, cp.state, cp.rng, Some(t))
            }
            None => {
                let mut rng = replicate_rng(self.cfg.seed, index as u64);
                let state = init_online_em(model, &theta0, self.ys[0], self.em, &mut rng)?;
                (TraceWriter::create(trace, names, model.id(), self.em)?, state, rng, None)
            }
        };
        if let Some(every) = self.cfg.checkpoint_every {
            writer = writer.with_checkpoints(&ckpt, every);
        }
        let start_t = state.t();
        let outcome = continue_online_em(model, state, self.ys[start_t + 1..].iter().copied(), self.em, &mut rng, &mut writer);
        let flushed = writer.flush();
        let outcome = outcome?;
        flushed?;
        if self.cfg.checkpoint_every.is_some() {
            writer.finish_checkpoint(&outcome.state, &rng)?;
        }
        Ok((outcome.state, resumed_from))
    }
}

/// Runs `cfg.replicates` independent estimations over the same data and
/// writes traces, `summary.csv` and `manifest.json` under the output
/// directory. Replicate failures are recorded, not returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| ExpError::io(&dir, e))?;
    let total = Instant::now();
    let (ys, data_desc) = load_observations(cfg, &dir)?;
    let em = cfg.online_config()?;
    let runner = ReplicateRun { cfg, em: &em, ys: &ys, dir: &dir, opts };
    let replicates: Vec<ReplicateReport> = (0..cfg.replicates).into_par_iter().map(|r| runner.run(r)).collect();

    let summary = dir.join("summary.csv");
    let text = summary_csv(cfg.param_names(), &replicates);
    std::fs::write(&summary, text).map_err(|e| ExpError::io(&summary, e))?;

    let horizon = ys.len() - 1;
    let ok_traces: Vec<PathBuf> = replicates
        .iter()
        .filter(|r| r.status == ReplicateStatus::Ok)
        .map(|r| r.trace.clone())
        .collect();
    let tail_summary = if !ok_traces.is_empty() && cfg.tail <= horizon {
        Some(summarize_traces(&ok_traces, cfg.tail)?)
    } else {
        None
    };

    let mut report = ExperimentReport {
        dir: dir.clone(),
        observations: ys.len(),
        replicates,
        summary,
        manifest: dir.join("manifest.json"),
        tail_summary,
    };
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "status": report.status(),
        "config": cfg,
        "online_em": em,
        "param_names": cfg.param_names(),
        "data": data_desc,
        "observations": ys.len(),
        "seed_derivation": {
            "generator": "ChaCha8",
            "data": { "seed": cfg.seed, "stream": 0 },
            "replicates": (0..cfg.replicates)
                .map(|r| json!({ "index": r, "seed": cfg.seed.wrapping_add(r as u64), "stream": 1 }))
                .collect::<Vec<_>>(),
        },
        "replicates": report.replicates,
        "tail_summary": report.tail_summary,
        "timings": { "total_ms": total.elapsed().as_secs_f64() * 1e3 },
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| ExpError::Other(e.to_string()))?;
    std::fs::write(&report.manifest, text + "\n").map_err(|e| ExpError::io(&report.manifest, e))?;
    report.manifest = dir.join("manifest.json");
    Ok(report)
}

/// Final parameter per replicate, then mean and five-number summary over
/// the successful replicates. Failed replicates leave their row empty.
pub fn summary_csv(names: &[&str], replicates: &[ReplicateReport]) -> String {
    let mut out = format!("row,{}\n", names.join(","));
    let mut line = |label: &str, v: Option<&[f64]>| {
        out.push_str(label);
        for k in 0..names.len() {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&fmt_f64(v[k]));
            }
        }
        out.push('\n');
    };
    for r in replicates {
        line(&format!("replicate_{}", r.index), r.final_theta.as_deref());
    }
    let finals: Vec<&Vec<f64>> = replicates.iter().filter_map(|r| r.final_theta.as_ref()).collect();
    if finals.is_empty() {
        return out;
    }
    let column = |k: usize| -> Vec<f64> { finals.iter().map(|v| v[k]).collect() };
    let stat = |f: &dyn Fn(Vec<f64>) -> f64| -> Vec<f64> { (0..names.len()).map(|k| f(column(k))).collect() };
    line("mean", Some(&stat(&|c| c.iter().mean())));
    line("min", Some(&stat(&|c| Data::new(c).min())));
    line("q25", Some(&stat(&|c| Data::new(c).lower_quartile())));
    line("median", Some(&stat(&|c| Data::new(c).median())));
    line("q75", Some(&stat(&|c| Data::new(c).upper_quartile())));
    line("max", Some(&stat(&|c| Data::new(c).max())));
    out
}
