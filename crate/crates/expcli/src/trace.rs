//! Trace CSV streaming, checkpoints and trace reading.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use paris_em::online_em::{Checkpoint, StepSink, CHECKPOINT_VERSION};
use paris_em::prelude::*;

use crate::data::fmt_f64;
use crate::error::{ExpError, Result};

pub fn trace_header(param_names: &[&str]) -> String {
    let mut h = vec!["t"];
    h.extend_from_slice(param_names);
    h.extend_from_slice(&["ess", "ar_trials_mean", "step_ns"]);
    h.join(",")
}

fn format_row(r: &TraceRecord64) -> String {
    let mut s = r.t.to_string();
    for v in &r.theta {
        s.push(',');
        s.push_str(&fmt_f64(*v));
    }
    s.push(',');
    s.push_str(&fmt_f64(r.ess));
    s.push(',');
    s.push_str(&fmt_f64(r.ar_trials_mean));
    s.push(',');
    s.push_str(&r.step_ns.to_string());
    s
}

/// Streams trace rows to disk and snapshots the run every `every` steps.
pub struct TraceWriter {
    path: PathBuf,
    out: BufWriter<File>,
    checkpoint: Option<(PathBuf, usize)>,
    model: String,
    config: OnlineEmConfig64,
    pub rows: usize,
    pub last: Option<TraceRecord64>,
    pub fallbacks: u64,
}

impl TraceWriter {
    /// Creates (truncating) `path` and writes the header.
    pub fn create(path: &Path, param_names: &[&str], model: &str, config: &OnlineEmConfig64) -> Result<Self> {
        let file = File::create(path).map_err(|e| ExpError::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", trace_header(param_names)).map_err(|e| ExpError::io(path, e))?;
        Ok(Self::wrap(path, out, model, config, 0))
    }

    /// Keeps rows with `t ≤ keep_through` of an existing trace and appends
    /// after them.
    pub fn resume(
        path: &Path,
        param_names: &[&str],
        keep_through: usize,
        model: &str,
        config: &OnlineEmConfig64,
    ) -> Result<Self> {
        let file = File::open(path).map_err(|e| ExpError::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines.next().transpose().map_err(|e| ExpError::io(path, e))?.unwrap_or_default();
        if header != trace_header(param_names) {
            return Err(ExpError::Parse { path: path.into(), message: format!("unexpected header `{header}`") });
        }
        let mut kept = Vec::new();
        for line in lines {
            let line = line.map_err(|e| ExpError::io(path, e))?;
            let t: usize = match line.split(',').next().and_then(|t| t.parse().ok()) {
                Some(t) => t,
                None => break, // torn final row from an interrupted write
            };
            if t > keep_through {
                break;
            }
            kept.push(line);
        }
        if kept.len() != keep_through {
            return Err(ExpError::Parse {
                path: path.into(),
                message: format!("trace holds {} rows but the checkpoint is at t = {keep_through}", kept.len()),
            });
        }
        let tmp = path.with_extension("csv.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(|e| ExpError::io(&tmp, e))?);
            writeln!(w, "{header}").map_err(|e| ExpError::io(&tmp, e))?;
            for l in &kept {
                writeln!(w, "{l}").map_err(|e| ExpError::io(&tmp, e))?;
            }
            w.flush().map_err(|e| ExpError::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| ExpError::io(path, e))?;
        let file = OpenOptions::new().append(true).open(path).map_err(|e| ExpError::io(path, e))?;
        Ok(Self::wrap(path, BufWriter::new(file), model, config, kept.len()))
    }

    fn wrap(path: &Path, out: BufWriter<File>, model: &str, config: &OnlineEmConfig64, rows: usize) -> Self {
        TraceWriter {
            path: path.to_path_buf(),
            out,
            checkpoint: None,
            model: model.to_string(),
            config: config.clone(),
            rows,
            last: None,
            fallbacks: 0,
        }
    }

    pub fn with_checkpoints(mut self, path: &Path, every: usize) -> Self {
        self.checkpoint = Some((path.to_path_buf(), every.max(1)));
        self
    }

    /// Snapshots the final state when checkpoints are enabled.
    pub fn finish_checkpoint(&mut self, state: &OnlineEmState64, rng: &SimRng) -> Result<()> {
        match self.checkpoint.clone() {
            Some((path, _)) => self.write_checkpoint(&path, state, rng),
            None => Ok(()),
        }
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| ExpError::io(&self.path, e))
    }

    fn write_checkpoint(&mut self, path: &Path, state: &OnlineEmState64, rng: &SimRng) -> Result<()> {
        // the trace must hold every row the checkpoint covers
        self.flush()?;
        let cp = Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.model.clone(),
            config: self.config.clone(),
            state: state.clone(),
            rng: rng.clone(),
        };
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, cp.to_json()?).map_err(|e| ExpError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| ExpError::io(path, e))
    }
}

impl StepSink<f64, SimRng> for TraceWriter {
    fn on_step(&mut self, record: &TraceRecord64, state: &OnlineEmState64, rng: &SimRng) -> paris_em::Result<()> {
        let sink = |e: ExpError| paris_em::Error::Sink(e.to_string());
        writeln!(self.out, "{}", format_row(record)).map_err(|e| sink(ExpError::io(&self.path, e)))?;
        self.rows += 1;
        self.fallbacks += record.fallbacks;
        self.last = Some(record.clone());
        if let Some((path, every)) = self.checkpoint.clone() {
            if record.t % every == 0 {
                self.write_checkpoint(&path, state, rng).map_err(sink)?;
            }
        }
        Ok(())
    }
}

impl Drop for TraceWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint<f64, SimRng>> {
    let text = std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))?;
    Ok(Checkpoint::from_json(&text)?)
}

/// A trace read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub param_names: Vec<String>,
    pub t: Vec<usize>,
    /// `theta[i]` is the parameter after step `t[i]`.
    pub theta: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
    pub ar_trials_mean: Vec<f64>,
    pub step_ns: Vec<u64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExpError::csv(path, e))?;
    let headers: Vec<String> = r.headers().map_err(|e| ExpError::csv(path, e))?.iter().map(str::to_string).collect();
    let n = headers.len();
    let tail = ["ess", "ar_trials_mean", "step_ns"];
    if n < 5 || headers[0] != "t" || headers[n - 3..] != tail {
        return Err(ExpError::Parse { path: path.into(), message: format!("not a trace header: {}", headers.join(",")) });
    }
    let param_names = headers[1..n - 3].to_vec();
    let mut trace = Trace {
        param_names,
        t: vec![],
        theta: vec![],
        ess: vec![],
        ar_trials_mean: vec![],
        step_ns: vec![],
    };
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| ExpError::csv(path, e))?;
        let bad = || ExpError::Parse { path: path.into(), message: format!("row {}: malformed", i + 1) };
        let num = |j: usize| rec[j].parse::<f64>().map_err(|_| bad());
        trace.t.push(rec[0].parse().map_err(|_| bad())?);
        trace.theta.push((1..n - 3).map(num).collect::<Result<_>>()?);
        trace.ess.push(num(n - 3)?);
        trace.ar_trials_mean.push(num(n - 2)?);
        trace.step_ns.push(rec[n - 1].parse().map_err(|_| bad())?);
    }
    Ok(trace)
}
