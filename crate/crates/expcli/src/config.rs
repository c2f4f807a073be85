//! Experiment configuration: TOML or JSON files, command-line overrides and
//! validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use paris_em::online_em::{OnlineEmConfig, SmootherKind, StepSizeSchedule};
use paris_em::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{ExpError, FieldError, Result};

/// Environment variable naming the root under which relative output
/// directories are created.
pub const OUTPUT_ROOT_ENV: &str = "PARIS_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Lg,
    Sv,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Lg => "lg",
            ModelId::Sv => "sv",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelId::Lg => &LinearGaussian::PARAMS,
            ModelId::Sv => &StochasticVolatility::PARAMS,
        }
    }

    fn validate(self, theta: &ParamVec64, lambda: LambdaVariant) -> paris_em::Result<()> {
        match self {
            ModelId::Lg => StateSpaceModel::<f64>::validate(&LinearGaussian::new(lambda), theta),
            ModelId::Sv => StateSpaceModel::<f64>::validate(&StochasticVolatility::new(lambda), theta),
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = ExpError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lg" => Ok(ModelId::Lg),
            "sv" => Ok(ModelId::Sv),
            other => Err(ExpError::field("model", format!("unknown model `{other}` (expected `lg` or `sv`)"))),
        }
    }
}

/// Parameter values keyed by name, e.g. `{ a = 0.8, sigma_v2 = 0.16, sigma_u2 = 0.81 }`.
pub type NamedParams = BTreeMap<String, f64>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Simulate `horizon` transitions under `theta_true` from the master seed.
    #[default]
    Simulate,
    /// Read the `y` column of a `(t, y)` CSV file.
    Csv { path: PathBuf },
}

fn default_backward_draws() -> usize {
    2
}
fn default_trial_cap() -> usize {
    paris_em::smoother::DEFAULT_TRIAL_CAP
}
fn default_alpha() -> f64 {
    0.6
}
fn default_burn_in() -> usize {
    60
}
fn default_replicates() -> usize {
    1
}
fn default_tail() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelId,
    /// Generating parameter; required when data are simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<NamedParams>,
    pub theta0: NamedParams,
    pub n_particles: usize,
    /// Backward draws per particle (PaRIS only).
    #[serde(default = "default_backward_draws")]
    pub backward_draws: usize,
    #[serde(default)]
    pub backward_mode: BackwardMode,
    #[serde(default = "default_trial_cap")]
    pub trial_cap: usize,
    /// Permit a single backward draw, which is not numerically stable over
    /// long horizons.
    #[serde(default)]
    pub allow_unstable: bool,
    /// Step-size exponent: `γ_t = t^{-alpha}`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Number of estimation steps; the data hold `horizon + 1` values.
    /// Defaults to the length of a CSV source minus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub algorithm: SmootherKind,
    #[serde(default)]
    pub lambda_variant: LambdaVariant,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Names of the parameters the M-step may change; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<Vec<String>>,
    /// Projection bound for the autoregressive coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_guard: Option<f64>,
    /// Write a checkpoint every this many steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    /// Tail length used by the run summary.
    #[serde(default = "default_tail")]
    pub tail: usize,
}

/// Reads a TOML or JSON document into a JSON value. The format follows the
/// extension; unknown extensions are tried as TOML first.
pub fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))?;
    let parse_err = |message: String| ExpError::Parse { path: path.to_path_buf(), message };
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let from_toml = |t: &str| -> std::result::Result<Value, String> {
        let v: toml::Table = toml::from_str(t).map_err(|e| e.to_string())?;
        serde_json::to_value(v).map_err(|e| e.to_string())
    };
    match ext {
        "json" => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string())),
        "toml" => from_toml(&text).map_err(parse_err),
        _ => from_toml(&text).or_else(|toml_err| {
            serde_json::from_str(&text).map_err(|json_err| parse_err(format!("not TOML ({toml_err}) nor JSON ({json_err})")))
        }),
    }
}

/// Recursively overlays `over` on `base`; objects merge key by key.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads the optional file, overlays `overrides` and deserializes.
fn resolve_document<T: serde::de::DeserializeOwned>(path: Option<&Path>, overrides: Map<String, Value>) -> Result<T> {
    let origin = || path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<command line>"));
    let mut doc = match path {
        Some(p) => read_document(p)?,
        None => Value::Object(Map::new()),
    };
    if !doc.is_object() {
        return Err(ExpError::Parse { path: origin(), message: "top level must be a table".into() });
    }
    merge(&mut doc, Value::Object(overrides));
    serde_json::from_value(doc).map_err(|e| ExpError::Parse { path: origin(), message: e.to_string() })
}

/// What `simulate` needs; other experiment keys in the same file are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub model: ModelId,
    pub theta_true: NamedParams,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SimulateSpec {
    pub fn resolve(path: Option<&Path>, overrides: Map<String, Value>) -> Result<Self> {
        let spec: SimulateSpec = resolve_document(path, overrides)?;
        let mut errors = Vec::new();
        if spec.horizon == 0 {
            errors.push(FieldError::new("horizon", "must be at least 1"));
        }
        let names = spec.model.param_names();
        for n in names {
            if !spec.theta_true.contains_key(*n) {
                errors.push(FieldError::new(format!("theta_true.{n}"), "missing"));
            }
        }
        for k in spec.theta_true.keys() {
            if !names.contains(&k.as_str()) {
                errors.push(FieldError::new(format!("theta_true.{k}"), "unknown parameter"));
            }
        }
        if errors.is_empty() {
            if let Err(e) = spec.model.validate(&spec.theta(), LambdaVariant::Mle) {
                errors.push(FieldError::new("theta_true", e.to_string()));
            }
        }
        if errors.is_empty() {
            Ok(spec)
        } else {
            Err(ExpError::Validation(errors))
        }
    }

    pub fn theta(&self) -> ParamVec64 {
        ParamVec(self.model.param_names().iter().map(|n| self.theta_true.get(*n).copied().unwrap_or(f64::NAN)).collect())
    }
}

/// Joins a relative path onto the output root, if one is set.
pub fn under_output_root(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

impl ExperimentConfig {
    /// Builds a validated configuration from an optional file and a set of
    /// overriding values.
    pub fn resolve(path: Option<&Path>, overrides: Map<String, Value>) -> Result<Self> {
        let cfg: ExperimentConfig = resolve_document(path, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExpError::Parse { path: "<string>".into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        self.model.param_names()
    }

    fn params_errors(&self, field: &str, map: &NamedParams, errors: &mut Vec<FieldError>) -> Option<ParamVec64> {
        let names = self.param_names();
        let mut ok = true;
        for name in names {
            if !map.contains_key(*name) {
                errors.push(FieldError::new(format!("{field}.{name}"), "missing"));
                ok = false;
            }
        }
        for key in map.keys() {
            if !names.contains(&key.as_str()) {
                errors.push(FieldError::new(
                    format!("{field}.{key}"),
                    format!("unknown parameter for model `{}` (expected {names:?})", self.model.as_str()),
                ));
                ok = false;
            }
        }
        if !ok {
            return None;
        }
        let theta = ParamVec(names.iter().map(|n| map[*n]).collect());
        if let Err(e) = self.model.validate(&theta, self.lambda_variant) {
            let which = match &e {
                paris_em::Error::ParameterDomain { name, .. } => format!("{field}.{name}"),
                _ => field.to_string(),
            };
            errors.push(FieldError::new(which, e.to_string()));
            return None;
        }
        Some(theta)
    }

    /// Checks every invariant and reports all offending fields at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let mut err = |f: &str, m: String| errors.push(FieldError::new(f, m));
        if self.n_particles == 0 {
            err("n_particles", "must be at least 1".into());
        }
        if self.backward_draws == 0 {
            err("backward_draws", "must be at least 1".into());
        } else if self.backward_draws < 2 && !self.allow_unstable && self.algorithm == SmootherKind::Paris {
            err("backward_draws", "must be at least 2 for a stable smoother (set allow_unstable to override)".into());
        }
        if self.trial_cap == 0 {
            err("trial_cap", "must be at least 1".into());
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            err("alpha", format!("{} is outside (0.5, 1]", self.alpha));
        }
        if self.horizon == Some(0) {
            err("horizon", "must be at least 1".into());
        }
        if self.replicates == 0 {
            err("replicates", "must be at least 1".into());
        }
        if self.tail == 0 {
            err("tail", "must be at least 1".into());
        }
        if self.checkpoint_every == Some(0) {
            err("checkpoint_every", "must be at least 1".into());
        }
        if let Some(g) = self.ar_guard {
            if !(g > 0.0 && g.is_finite()) {
                err("ar_guard", format!("{g} must be positive and finite"));
            }
        }
        match &self.data {
            DataSource::Simulate => {
                if self.horizon.is_none() {
                    err("horizon", "required when data are simulated".into());
                }
                if self.theta_true.is_none() {
                    err("theta_true", "required when data are simulated".into());
                }
            }
            DataSource::Csv { path } => {
                if path.as_os_str().is_empty() {
                    err("data.path", "must not be empty".into());
                }
            }
        }
        if let Some(update) = &self.update {
            for name in update {
                if !self.param_names().contains(&name.as_str()) {
                    err("update", format!("unknown parameter `{name}`"));
                }
            }
        }
        self.params_errors("theta0", &self.theta0, &mut errors);
        if let Some(t) = &self.theta_true {
            self.params_errors("theta_true", t, &mut errors);
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ExpError::Validation(errors))
        }
    }

    pub fn theta0_vec(&self) -> ParamVec64 {
        ParamVec(self.param_names().iter().map(|n| self.theta0[*n]).collect())
    }

    pub fn theta_true_vec(&self) -> Option<ParamVec64> {
        self.theta_true.as_ref().map(|t| ParamVec(self.param_names().iter().map(|n| t[*n]).collect()))
    }

    pub fn update_mask(&self) -> Option<Vec<bool>> {
        self.update
            .as_ref()
            .map(|u| self.param_names().iter().map(|n| u.iter().any(|m| m == n)).collect())
    }

    pub fn online_config(&self) -> Result<OnlineEmConfig64> {
        let backward = BackwardSampleConfig::new(self.backward_draws, self.backward_mode)?.with_trial_cap(self.trial_cap);
        let mut cfg = OnlineEmConfig::new(self.n_particles, backward, StepSizeSchedule::new(self.alpha)?)
            .with_burn_in(self.burn_in)
            .with_algorithm(self.algorithm);
        cfg.update_mask = self.update_mask();
        cfg.ar_guard = self.ar_guard;
        Ok(cfg)
    }

    /// Output directory: `output_dir` (absolute, or relative to the output
    /// root) or a name derived from the model, algorithm and seed.
    pub fn resolved_output_dir(&self) -> PathBuf {
        let rel = self.output_dir.clone().unwrap_or_else(|| {
            let algo = match self.algorithm {
                SmootherKind::Paris => "paris",
                SmootherKind::Ffbsm => "ffbsm",
            };
            PathBuf::from(format!("{}-{algo}-seed{}", self.model.as_str(), self.seed))
        });
        under_output_root(&rel)
    }
}

/// Parses `name=value,name=value` into a parameter map.
pub fn parse_named_params(text: &str) -> std::result::Result<NamedParams, String> {
    let mut out = NamedParams::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("`{part}` is not of the form name=value"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("`{}` is not a number", v.trim()))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LG: &str = r#"
        model = "lg"
        n_particles = 100
        horizon = 500
        seed = 3
        [theta_true]
        a = 0.8
        sigma_v2 = 0.16
        sigma_u2 = 0.81
        [theta0]
        a = 0.1
        sigma_v2 = 4.0
        sigma_u2 = 0.81
    "#;

    #[test]
    fn defaults_are_filled() {
        let cfg = ExperimentConfig::from_toml_str(LG).unwrap();
        assert_eq!(cfg.alpha, 0.6);
        assert_eq!(cfg.burn_in, 60);
        assert_eq!(cfg.backward_draws, 2);
        assert_eq!(cfg.data, DataSource::Simulate);
        assert_eq!(cfg.theta0_vec().0, vec![0.1, 4.0, 0.81]);
    }

    #[test]
    fn all_offending_fields_are_reported() {
        let bad = LG.replace("n_particles = 100", "n_particles = 0\nalpha = 0.4").replace("sigma_v2 = 4.0", "sigma_v2 = -1.0");
        let Err(ExpError::Validation(errs)) = ExperimentConfig::from_toml_str(&bad) else { panic!() };
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"n_particles"));
        assert!(fields.contains(&"alpha"));
        assert!(fields.contains(&"theta0.sigma_v2"));
    }

    #[test]
    fn unknown_and_missing_parameters() {
        let bad = LG.replace("a = 0.1", "phi = 0.1");
        let Err(ExpError::Validation(errs)) = ExperimentConfig::from_toml_str(&bad) else { panic!() };
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"theta0.a") && fields.contains(&"theta0.phi"));
    }

    #[test]
    fn overrides_merge_per_key() {
        let mut base = serde_json::json!({"theta0": {"a": 0.1, "b": 2.0}, "n": 1});
        merge(&mut base, serde_json::json!({"theta0": {"a": 0.5}, "n": 7}));
        assert_eq!(base, serde_json::json!({"theta0": {"a": 0.5, "b": 2.0}, "n": 7}));
    }

    #[test]
    fn named_params_parse() {
        let p = parse_named_params("a=0.5, sigma_v2 = 2").unwrap();
        assert_eq!(p["a"], 0.5);
        assert_eq!(p["sigma_v2"], 2.0);
        assert!(parse_named_params("a:1").is_err());
    }

    #[test]
    fn single_backward_draw_needs_opt_in() {
        let one = LG.replace("n_particles = 100", "n_particles = 100\nbackward_draws = 1");
        assert!(ExperimentConfig::from_toml_str(&one).is_err());
        let opted = one.replace("backward_draws = 1", "backward_draws = 1\nallow_unstable = true");
        assert!(ExperimentConfig::from_toml_str(&opted).is_ok());
    }
}
