use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paris_em::prelude::{BackwardMode, LambdaVariant, SmootherKind};
use paris_exp::benchmark::{match_budget, run_benchmark, BenchmarkConfig, BudgetConfig};
use paris_exp::config::{parse_named_params, under_output_root, ExperimentConfig, ModelId, NamedParams, SimulateSpec};
use paris_exp::data;
use paris_exp::experiment::{run_experiment, RunOptions};
use paris_exp::summarize::summarize_traces;
use paris_exp::{ExpError, Result};
use serde_json::{json, Map, Value};

/// Particle-based online EM experiments.
#[derive(Parser, Debug)]
#[command(name = "paris", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG also works.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Root for relative output paths.
    #[arg(long, env = paris_exp::config::OUTPUT_ROOT_ENV, global = true)]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate observations to a (t, y) CSV with a JSON sidecar.
    Simulate {
        #[command(flatten)]
        exp: ExperimentFlags,
        /// Output CSV (relative paths go under the output root).
        #[arg(long, default_value = "data.csv")]
        out: PathBuf,
    },
    /// Run replicated online EM estimation.
    Run {
        #[command(flatten)]
        exp: ExperimentFlags,
        /// Continue replicates from their checkpoints.
        #[arg(long)]
        resume: bool,
    },
    /// Time both smoothers over a grid of particle counts.
    Benchmark(BenchmarkFlags),
    /// Tail means of parameter traces.
    Summarize {
        /// Number of final records to average.
        #[arg(long, default_value_t = 1000)]
        tail: usize,
        /// Write the summary CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

fn named(s: &str) -> std::result::Result<NamedParams, String> {
    parse_named_params(s)
}

/// Flags mirroring the configuration file; each one overrides the file.
#[derive(Args, Debug, Default)]
struct ExperimentFlags {
    /// TOML or JSON configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelId>,
    /// Generating parameter, e.g. `a=0.8,sigma_v2=0.16,sigma_u2=0.81`.
    #[arg(long, value_parser = named)]
    theta_true: Option<NamedParams>,
    /// Initial parameter, same syntax as --theta-true.
    #[arg(long, value_parser = named)]
    theta0: Option<NamedParams>,
    #[arg(short = 'n', long)]
    n_particles: Option<usize>,
    #[arg(long)]
    backward_draws: Option<usize>,
    #[arg(long)]
    backward_mode: Option<BackwardMode>,
    #[arg(long)]
    trial_cap: Option<usize>,
    #[arg(long)]
    allow_unstable: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algorithm: Option<SmootherKind>,
    #[arg(long)]
    lambda_variant: Option<LambdaVariant>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Read observations from this CSV instead of simulating them.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Parameters the M-step may change, e.g. `a,sigma_v2`.
    #[arg(long, value_delimiter = ',')]
    update: Option<Vec<String>>,
    #[arg(long)]
    ar_guard: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    tail: Option<usize>,
}

impl ExperimentFlags {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        macro_rules! opt {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    put(stringify!($field), json!(v));
                }
            )*};
        }
        opt!(
            model, theta_true, theta0, n_particles, backward_draws, backward_mode, trial_cap, alpha, burn_in, horizon,
            seed, algorithm, lambda_variant, replicates, output_dir, update, ar_guard, checkpoint_every, tail
        );
        if self.allow_unstable {
            put("allow_unstable", json!(true));
        }
        if let Some(p) = &self.data {
            put("data", json!({ "source": "csv", "path": p }));
        }
        m
    }
}

#[derive(Args, Debug)]
struct BenchmarkFlags {
    #[arg(long, default_value = "lg")]
    model: ModelId,
    /// Parameter for simulation and the recursion; model default if absent.
    #[arg(long, value_parser = named)]
    theta: Option<NamedParams>,
    /// Particle counts, at least 4 spanning 8x.
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000,4000")]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 2)]
    backward_draws: usize,
    #[arg(long, default_value = "accept-reject")]
    backward_mode: BackwardMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instead of a grid, find the FFBSm particle count whose step time
    /// matches PaRIS with this many particles.
    #[arg(long)]
    match_budget: Option<usize>,
    /// Directory for benchmark.json and benchmark.csv.
    #[arg(long, default_value = "benchmark")]
    output_dir: PathBuf,
}

fn theta_vec(model: ModelId, theta: Option<&NamedParams>) -> Result<Vec<f64>> {
    let defaults: &[f64] = match model {
        ModelId::Lg => &[0.8, 0.16, 0.81],
        ModelId::Sv => &[0.975, 0.0256, 0.3969],
    };
    let names = model.param_names();
    if let Some(t) = theta {
        if let Some(k) = t.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(ExpError::field(format!("theta.{k}"), "unknown parameter"));
        }
    }
    Ok(names
        .iter()
        .zip(defaults)
        .map(|(n, d)| theta.and_then(|t| t.get(*n)).copied().unwrap_or(*d))
        .collect())
}

fn write(path: &std::path::Path, text: String) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ExpError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| ExpError::io(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { exp, out } => {
            let spec = SimulateSpec::resolve(exp.config.as_deref(), exp.overrides())?;
            let ys = data::simulate(spec.model, &spec.theta(), spec.horizon, spec.seed)?;
            let sidecar = data::DataSidecar {
                model: spec.model,
                theta_true: spec.theta_true.clone(),
                seed: spec.seed,
                horizon: spec.horizon,
                generator: format!("ChaCha8 seed {} stream 0", spec.seed),
            };
            let out = under_output_root(&out);
            data::write_data(&out, &ys, Some(&sidecar))?;
            println!("{}", out.display());
            Ok(0)
        }
        Command::Run { exp, resume } => {
            let cfg = ExperimentConfig::resolve(exp.config.as_deref(), exp.overrides())?;
            let report = run_experiment(&cfg, RunOptions { resume })?;
            println!("output: {}", report.dir.display());
            for r in &report.replicates {
                match &r.final_theta {
                    Some(t) => println!("replicate {}: {:?}", r.index, t),
                    None => println!("replicate {}: {:?} ({})", r.index, r.status, r.message.as_deref().unwrap_or("")),
                }
            }
            Ok(report.exit_code())
        }
        Command::Benchmark(b) => {
            let theta = theta_vec(b.model, b.theta.as_ref())?;
            let dir = under_output_root(&b.output_dir);
            if let Some(n_paris) = b.match_budget {
                let mut cfg = BudgetConfig::new(b.model, theta, n_paris, b.backward_draws);
                cfg.backward_mode = b.backward_mode;
                cfg.steps = b.steps;
                cfg.warmup = b.warmup;
                cfg.repetitions = b.repetitions;
                cfg.seed = b.seed;
                let m = match_budget(&cfg)?;
                write(&dir.join("budget.json"), to_json(&m))?;
                println!(
                    "N_paris = {}, N_ffbsm = {}, time ratio {:.3} ({})",
                    m.n_paris,
                    m.n_ffbsm,
                    m.ratio,
                    if m.matched { "matched" } else { "not matched" }
                );
                return Ok(0);
            }
            let mut cfg = BenchmarkConfig::new(b.model, theta, b.grid);
            cfg.steps = b.steps;
            cfg.warmup = b.warmup;
            cfg.repetitions = b.repetitions;
            cfg.backward_draws = b.backward_draws;
            cfg.backward_mode = b.backward_mode;
            cfg.seed = b.seed;
            let report = run_benchmark(&cfg)?;
            write(&dir.join("benchmark.json"), to_json(&report))?;
            write(&dir.join("benchmark.csv"), report.raw_csv())?;
            for a in &report.algorithms {
                println!("{:?}: slope {:.3}, median ns/step {:?}", a.algorithm, a.slope, a.median_step_ns);
            }
            Ok(0)
        }
        Command::Summarize { tail, out, traces } => {
            let s = summarize_traces(&traces, tail)?;
            match out {
                Some(p) => write(&under_output_root(&p), s.to_csv())?,
                None => print!("{}", s.to_csv()),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(root) = &cli.output_root {
        // make the flag visible to path resolution in the library
        std::env::set_var(paris_exp::config::OUTPUT_ROOT_ENV, root);
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
