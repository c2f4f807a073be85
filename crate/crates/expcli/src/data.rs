//! Observation files: a `(t, y)` CSV with an optional JSON sidecar.

use std::path::{Path, PathBuf};

use paris_em::prelude::*;
use paris_em::rng::data_rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelId, NamedParams};
use crate::error::{ExpError, Result};

/// Provenance of a dataset, stored next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSidecar {
    pub model: ModelId,
    pub theta_true: NamedParams,
    pub seed: u64,
    /// Number of transitions; the file holds `horizon + 1` observations.
    pub horizon: usize,
    pub generator: String,
}

/// `data.csv` → `data.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Simulates `y_{0:T}` from the master seed alone, so every replicate of an
/// experiment sees the same data.
pub fn simulate(model: ModelId, theta: &ParamVec64, horizon: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = data_rng(seed);
    let path = match model {
        ModelId::Lg => lg_simulate(theta, horizon, None, &mut rng)?,
        ModelId::Sv => sv_simulate(theta, horizon, None, &mut rng)?,
    };
    Ok(path.observations)
}

/// Simulates the data described by `cfg` (which must have `theta_true`).
pub fn simulate_for(cfg: &ExperimentConfig) -> Result<(Vec<f64>, DataSidecar)> {
    let theta = cfg.theta_true_vec().ok_or_else(|| ExpError::field("theta_true", "required when data are simulated"))?;
    let horizon = cfg.horizon.ok_or_else(|| ExpError::field("horizon", "required when data are simulated"))?;
    let ys = simulate(cfg.model, &theta, horizon, cfg.seed)?;
    let sidecar = DataSidecar {
        model: cfg.model,
        theta_true: cfg.theta_true.clone().unwrap_or_default(),
        seed: cfg.seed,
        horizon,
        generator: format!("ChaCha8 seed {} stream 0", cfg.seed),
    };
    Ok((ys, sidecar))
}

pub fn write_data(path: &Path, ys: &[f64], sidecar: Option<&DataSidecar>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ExpError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| ExpError::csv(path, e))?;
    w.write_record(["t", "y"]).map_err(|e| ExpError::csv(path, e))?;
    for (t, y) in ys.iter().enumerate() {
        w.write_record([t.to_string(), fmt_f64(*y)]).map_err(|e| ExpError::csv(path, e))?;
    }
    w.flush().map_err(|e| ExpError::io(path, e))?;
    if let Some(s) = sidecar {
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(s).map_err(|e| ExpError::Other(e.to_string()))?;
        std::fs::write(&side, text + "\n").map_err(|e| ExpError::io(&side, e))?;
    }
    Ok(())
}

/// Reads the `y` column; rows must be in order `t = 0, 1, ...`.
pub fn read_data(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExpError::csv(path, e))?;
    let headers = r.headers().map_err(|e| ExpError::csv(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (tc, yc) = match (col("t"), col("y")) {
        (Some(t), Some(y)) => (t, y),
        _ => return Err(ExpError::Parse { path: path.into(), message: "expected columns `t` and `y`".into() }),
    };
    let mut ys = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| ExpError::csv(path, e))?;
        let bad = |what: &str| ExpError::Parse { path: path.into(), message: format!("row {}: {what}", i + 1) };
        let t: usize = rec[tc].trim().parse().map_err(|_| bad("t is not an integer"))?;
        if t != i {
            return Err(bad(&format!("expected t = {i}, found {t}")));
        }
        let y: f64 = rec[yc].trim().parse().map_err(|_| bad("y is not a number"))?;
        if !y.is_finite() {
            return Err(bad("y is not finite"));
        }
        ys.push(y);
    }
    if ys.len() < 2 {
        return Err(ExpError::Parse { path: path.into(), message: "need at least two observations".into() });
    }
    Ok(ys)
}

pub fn read_sidecar(csv: &Path) -> Result<Option<DataSidecar>> {
    let side = sidecar_path(csv);
    if !side.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&side).map_err(|e| ExpError::io(&side, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| ExpError::Parse { path: side, message: e.to_string() })
}

/// Shortest-exact would also round-trip, but a fixed 17 significant digits
/// keeps columns aligned and byte-stable across platforms.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
