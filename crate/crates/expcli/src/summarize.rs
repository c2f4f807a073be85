//! Tail averages of estimation traces.

use std::path::{Path, PathBuf};

use serde::Serialize;
use statrs::statistics::Statistics;

use crate::data::fmt_f64;
use crate::error::{ExpError, Result};
use crate::trace::read_trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSummary {
    pub param_names: Vec<String>,
    pub tail: usize,
    pub traces: Vec<PathBuf>,
    /// Mean of the final `tail` estimates of each trace.
    pub per_trace_mean: Vec<Vec<f64>>,
    /// Mean over the final `tail` records of every trace together.
    pub mean: Vec<f64>,
    /// Population standard deviation over the same pooled records.
    pub std: Vec<f64>,
    /// Sample standard deviation of the per-trace means (needs two traces).
    pub between_std: Option<Vec<f64>>,
}

/// Averages the final `tail` parameter estimates of every trace.
pub fn summarize_traces<P: AsRef<Path>>(paths: &[P], tail: usize) -> Result<TailSummary> {
    if paths.is_empty() {
        return Err(ExpError::field("traces", "at least one trace is required"));
    }
    if tail == 0 {
        return Err(ExpError::field("tail", "must be at least 1"));
    }
    let mut names: Option<Vec<String>> = None;
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let mut per_trace_mean = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let tr = read_trace(p)?;
        match &names {
            None => {
                names = Some(tr.param_names.clone());
                pooled = vec![Vec::new(); tr.param_names.len()];
            }
            Some(n) if *n != tr.param_names => {
                return Err(ExpError::Parse {
                    path: p.into(),
                    message: format!("parameters {:?} differ from {:?}", tr.param_names, n),
                });
            }
            Some(_) => {}
        }
        if tail > tr.len() {
            return Err(ExpError::field("tail", format!("{tail} exceeds the {} records of {}", tr.len(), p.display())));
        }
        let rows = &tr.theta[tr.len() - tail..];
        let mut means = Vec::with_capacity(pooled.len());
        for (k, col) in pooled.iter_mut().enumerate() {
            let values: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            means.push(values.iter().mean());
            col.extend(values);
        }
        per_trace_mean.push(means);
    }
    // every trace contributes `tail` records, so the pooled mean is the
    // mean of the per-trace means
    let mean = (0..pooled.len()).map(|k| per_trace_mean.iter().map(|m| m[k]).mean()).collect();
    let std = pooled.iter().map(|c| c.iter().population_std_dev()).collect();
    let between_std = (per_trace_mean.len() > 1)
        .then(|| (0..pooled.len()).map(|k| per_trace_mean.iter().map(|m| m[k]).std_dev()).collect());
    Ok(TailSummary {
        param_names: names.unwrap_or_default(),
        tail,
        traces: paths.iter().map(|p| p.as_ref().to_path_buf()).collect(),
        per_trace_mean,
        mean,
        std,
        between_std,
    })
}

impl TailSummary {
    /// `row,<params>` with one line per trace, then `mean`, `std` and
    /// (with several traces) `between_std`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("row,{}\n", self.param_names.join(","));
        let mut line = |label: String, v: &[f64]| {
            out.push_str(&label);
            for x in v {
                out.push(',');
                out.push_str(&fmt_f64(*x));
            }
            out.push('\n');
        };
        for (i, m) in self.per_trace_mean.iter().enumerate() {
            line(format!("trace_{i}"), m);
        }
        line("mean".into(), &self.mean);
        line("std".into(), &self.std);
        if let Some(b) = &self.between_std {
            line("between_std".into(), b);
        }
        out
    }
}
