//! Command-line front end: `generate`, `estimate`, `bench`, `rate-check`.
//!
//! Exit codes: 0 success, 1 invalid arguments or input, 2 runtime failure.
//! `--config FILE` reads a JSON object whose keys are flag names
//! (`{"m": 200, "T": 5, "noise": "student_t:3,1"}`); flags given on the
//! command line override it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::ais::Beta;
use crate::bench::{mse, run_experiment, ExperimentReport, ExperimentSpec, MethodSpec};
use crate::data::{write_atomic, Dataset};
use crate::datagen::{generate, Dependence, EnvironmentSpec, NoiseSpec, Task};
use crate::error::Error;
use crate::loss::LossKind;
use crate::rng::SeededRng;
use crate::robust::{BlockAssignment, DEFAULT_GM_TOL};
use crate::sampling::SampleMode;

const DEFAULT_SEED: u64 = 0;

const NOISE_HELP: &str =
    "Noise law as KIND:PARAMS: gaussian:SIGMA, student_t:NU,SIGMA or pareto:ALPHA,SIGMA";

#[derive(Debug, Parser)]
#[command(
    name = "robust-subsample",
    version,
    about = "Robust subsampling estimators and benchmarks"
)]
struct Cli {
    /// JSON file of flag values; command-line flags take precedence [default: none]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus a JSON sidecar with the truth)
    Generate(GenerateArgs),
    /// Fit one estimator to a CSV dataset
    Estimate(EstimateArgs),
    /// Run a seeded experiment sweep from a JSON spec
    Bench(BenchArgs),
    /// Check log-log rate fits in a bench report against bounds
    RateCheck(RateCheckArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct GenerateArgs {
    /// Estimation task
    #[arg(long, default_value = "regression", value_parser = parse_task)]
    task: Task,
    /// Number of rows
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of columns
    #[arg(long, default_value_t = 10)]
    p: usize,
    /// Nonzero coordinates of the true parameter (regression) or of the mean
    #[arg(long, default_value_t = 2)]
    s: usize,
    /// Value of each nonzero coordinate
    #[arg(long, default_value_t = 1.0)]
    beta_scale: f64,
    #[arg(long, default_value = "gaussian:1", help = NOISE_HELP)]
    noise: NoiseSpec,
    /// Fraction of rows replaced by uniform garbage, in [0, 0.5)
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// Magnitude bound of corrupted entries
    #[arg(long, default_value_t = 1000.0)]
    c_mag: f64,
    /// Row dependence: iid or ar1:PHI
    #[arg(long, default_value = "iid")]
    dependence: Dependence,
    /// Random seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output CSV path; the sidecar goes next to it with a .json extension (required)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Ais,
    Stratified,
    Ols,
    Ridge,
    Lasso,
    UniformSubsample,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct EstimateArgs {
    /// Input CSV with header x1..xp[,y] (required)
    #[arg(long)]
    data: PathBuf,
    /// Estimator
    #[arg(long, value_enum, default_value = "ais")]
    method: MethodArg,
    /// Subsample size [default: 100 for ais/stratified/uniform-subsample; full sample for ols/ridge/lasso]
    #[arg(long)]
    m: Option<usize>,
    /// AIS rounds
    #[arg(long = "T", default_value_t = 5)]
    rounds: usize,
    /// AIS temperature: a number >= 0 or `auto`
    #[arg(long, default_value = "auto")]
    beta: Beta,
    /// AIS mixing weight with the uniform distribution, in [0, 0.5]
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    /// AIS draw mode
    #[arg(long, default_value = "with-replacement")]
    mode: SampleMode,
    /// AIS loss: squared or huber[:DELTA]
    #[arg(long, default_value = "squared")]
    loss: LossKind,
    /// Number of strata
    #[arg(long = "K", default_value_t = 10)]
    strata: usize,
    /// Stratified task [default: regression when the data has y, else mean]
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Median-of-means blocks per stratum [default: floor(sqrt(m_k))]
    #[arg(long)]
    mom_blocks: Option<usize>,
    /// Median-of-means block assignment: contiguous or shuffled
    #[arg(long, default_value = "contiguous")]
    block_assignment: BlockAssignment,
    /// Ridge/lasso penalty [default: ridge 1.0; lasso 0.1 * lambda_max]
    #[arg(long)]
    penalty: Option<f64>,
    /// Random seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the JSON result here instead of stdout [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct BenchArgs {
    /// Experiment spec (JSON) (required)
    #[arg(long)]
    spec: PathBuf,
    /// Seed; overrides the spec's seed [default: the spec's seed]
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path [default: spec outputs.json, else stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-cell CSV path [default: spec outputs.csv, else none]
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct RateCheckArgs {
    /// Bench report (JSON) (required)
    #[arg(long)]
    report: PathBuf,
    /// Method label to check [default: every subsampling method in the report]
    #[arg(long)]
    method: Option<String>,
    /// Smallest accepted slope
    #[arg(long, default_value_t = -0.65, allow_negative_numbers = true)]
    slope_min: f64,
    /// Largest accepted slope
    #[arg(long, default_value_t = -0.35, allow_negative_numbers = true)]
    slope_max: f64,
    /// Smallest accepted R^2
    #[arg(long, default_value_t = 0.95)]
    r2_min: f64,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Csv(_) | Error::Json(_) => {
                Failure::usage(e.to_string())
            }
            _ => Failure::runtime(e.to_string()),
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::RateCheck(a) => cmd_rate_check(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Splices flags from a `--config` file in right after the subcommand,
/// so later command-line flags override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::usage(format!("--config: cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("--config: {}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Failure::usage(
            "--config: expected a JSON object of flag values",
        ));
    };
    let mut flags: Vec<OsString> = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if key == "config" {
            return Err(Failure::usage(
                "--config: nested config files are not supported",
            ));
        }
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => flags.push(flag.into()),
            Value::Number(n) => {
                flags.push(flag.into());
                flags.push(n.to_string().into());
            }
            Value::String(s) => {
                flags.push(flag.into());
                flags.push(s.into());
            }
            other => {
                return Err(Failure::usage(format!(
                    "--config: value for `{key}` must be a scalar, got {other}"
                )))
            }
        }
    }
    let sub = args
        .iter()
        .position(|a| {
            matches!(
                a.to_str(),
                Some("generate" | "estimate" | "bench" | "rate-check")
            )
        })
        .ok_or_else(|| Failure::usage("missing subcommand"))?;
    let mut out = args[..=sub].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let env = EnvironmentSpec {
        task: a.task,
        n: a.n,
        p: a.p,
        s: a.s,
        beta_scale: a.beta_scale,
        noise: a.noise,
        contamination: a.eps,
        c_mag: a.c_mag,
        dependence: a.dependence,
    };
    env.validate().map_err(flag_error)?;
    let d = generate(&env, SeededRng::new(a.seed, 0))?;
    d.write_csv(&a.out)?;
    let sidecar = json!({
        "spec": env,
        "seed": a.seed,
        "stream_id": 0,
        "truth": d.truth,
        "corrupted": d.meta.corrupted,
        "library_version": env!("CARGO_PKG_VERSION"),
    });
    let side_path = sidecar_path(&a.out);
    write_atomic(&side_path, pretty(&sidecar).as_bytes())?;
    eprintln!(
        "wrote {} ({} x {}) and {} (seed {})",
        a.out.display(),
        d.n(),
        d.p(),
        side_path.display(),
        a.seed
    );
    Ok(())
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Prefixes library validation messages with the flag they concern.
fn flag_error(e: Error) -> Failure {
    let msg = match &e {
        Error::InvalidArgument(m) => m.clone(),
        other => return Failure::from(Error::InvalidArgument(other.to_string())),
    };
    let flag = [
        ("m ", "--m"),
        ("T ", "--T"),
        ("K ", "--K"),
        ("lambda", "--lambda"),
        ("beta", "--beta"),
        ("mom-blocks", "--mom-blocks"),
        ("n ", "--n"),
        ("p ", "--p"),
        ("s ", "--s"),
        ("noise", "--noise"),
        ("contamination", "--eps"),
        ("c_mag", "--c-mag"),
        ("ar1", "--dependence"),
        ("huber", "--loss"),
    ]
    .iter()
    .find(|(prefix, _)| msg.starts_with(prefix))
    .map(|(_, f)| *f);
    let msg = msg.replace(">=", "≥");
    match flag {
        Some(f) => Failure::usage(format!("invalid value for {f}: {msg}")),
        None => Failure::usage(msg),
    }
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), Failure> {
    if a.m == Some(0) {
        return Err(Failure::usage("invalid value for --m: m must be ≥ 1"));
    }
    let d = Dataset::read_csv(&a.data)?;
    let violations = d.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Failure::usage(format!(
            "--data: {} failed validation: {}",
            a.data.display(),
            list.join("; ")
        )));
    }
    let truth = read_truth(&a.data, d.p())?;
    let task = a.task.unwrap_or(if d.is_regression() {
        Task::Regression
    } else {
        Task::Mean
    });
    if task == Task::Regression && !d.is_regression() {
        return Err(Failure::usage(
            "--task: regression requires a y column in --data",
        ));
    }
    let subsample_m = a.m.unwrap_or(100);
    let (spec, m) = match a.method {
        MethodArg::Ais => (
            MethodSpec::Ais {
                rounds: a.rounds,
                beta: a.beta,
                lambda: a.lambda,
                loss: a.loss,
                mode: a.mode,
            },
            subsample_m,
        ),
        MethodArg::Stratified => (
            MethodSpec::Stratified {
                strata: a.strata,
                mom_blocks: a.mom_blocks,
                block_assignment: a.block_assignment,
                gm_tol: DEFAULT_GM_TOL,
            },
            subsample_m,
        ),
        MethodArg::Ols => (
            MethodSpec::Ols {
                full: a.m.is_none(),
            },
            a.m.unwrap_or(d.n()),
        ),
        MethodArg::Ridge => (
            MethodSpec::Ridge {
                lambda: a.penalty.unwrap_or(1.0),
                full: a.m.is_none(),
            },
            a.m.unwrap_or(d.n()),
        ),
        MethodArg::Lasso => (
            MethodSpec::Lasso {
                lambda: a.penalty,
                full: a.m.is_none(),
            },
            a.m.unwrap_or(d.n()),
        ),
        MethodArg::UniformSubsample => (MethodSpec::UniformSubsample {}, subsample_m),
    };
    let data_view;
    let d = if task == Task::Mean && d.is_regression() {
        // location estimation on the rows of X
        data_view = Dataset::new(d.x.clone(), None);
        &data_view
    } else {
        &d
    };
    if a.seed == DEFAULT_SEED {
        eprintln!("seed: {DEFAULT_SEED} (default)");
    }
    let result = crate::bench::fit_method(&spec, d, m, SeededRng::new(a.seed, 0))
        .map_err(flag_error_or_runtime)?;
    if !result.is_finite() {
        return Err(Failure::runtime("estimate is not finite"));
    }
    let err = truth.as_ref().map(|t| mse(&result.theta, t)).transpose()?;
    let out = json!({
        "config": {
            "data": a.data,
            "method": a.method,
            "m": m,
            "seed": a.seed,
            "stream_id": 0,
            "task": task,
            "estimator": spec,
        },
        "result": result,
        "mse": err,
        "library_version": env!("CARGO_PKG_VERSION"),
    });
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    emit(&pretty(&out), a.out.as_deref())
}

fn flag_error_or_runtime(e: Error) -> Failure {
    match e {
        Error::InvalidArgument(_) => flag_error(e),
        other => Failure::runtime(other.to_string()),
    }
}

/// Truth from the generator's sidecar, when one sits next to the CSV.
fn read_truth(csv: &Path, p: usize) -> Result<Option<Vec<f64>>, Failure> {
    let side = sidecar_path(csv);
    if !side.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&side)
        .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", side.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", side.display())))?;
    let truth: Option<Vec<f64>> = match v.get("truth") {
        None | Some(Value::Null) => None,
        Some(t) => Some(
            serde_json::from_value(t.clone())
                .map_err(|e| Failure::usage(format!("{}: bad truth: {e}", side.display())))?,
        ),
    };
    match truth {
        Some(t) if t.len() != p => Err(Failure::usage(format!(
            "{}: truth has {} entries but the data has {p} columns",
            side.display(),
            t.len()
        ))),
        t => Ok(t),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => Ok(write_atomic(path, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.spec)
        .map_err(|e| Failure::usage(format!("--spec: cannot read {}: {e}", a.spec.display())))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("--spec: {}: {e}", a.spec.display())))?;
    if let Some(seed) = a.seed {
        spec.seed = Some(seed);
    }
    if spec.seed.is_none() {
        return Err(Failure::usage(
            "--seed: bench requires a seed (flag or spec `seed`)",
        ));
    }
    spec.validate()
        .map_err(|e| Failure::usage(format!("--spec: {e}")))?;
    let report = run_experiment(&spec).map_err(|e| match e {
        Error::InvalidArgument(m) => Failure::usage(m),
        other => Failure::runtime(other.to_string()),
    })?;
    let json_out = a.out.or_else(|| spec.outputs.json.clone());
    let csv_out = a.csv.or_else(|| spec.outputs.csv.clone());
    if let Some(path) = &csv_out {
        report.write_csv(path)?;
    }
    let failed: usize = report.summary.iter().map(|s| s.failed).sum();
    if failed > 0 {
        eprintln!("warning: {failed} cell(s) failed; see `failure` in the report");
    }
    let mut text = report.to_json()?;
    text.push('\n');
    emit(&text, json_out.as_deref())
}

fn cmd_rate_check(a: RateCheckArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.report).map_err(|e| {
        Failure::usage(format!("--report: cannot read {}: {e}", a.report.display()))
    })?;
    let report: ExperimentReport = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("--report: {}: {e}", a.report.display())))?;
    if a.slope_min > a.slope_max {
        return Err(Failure::usage("--slope-min: must not exceed --slope-max"));
    }
    let mut checked = 0;
    let mut failed = 0;
    for rate in &report.rate_fits {
        if a.method.as_ref().is_some_and(|m| *m != rate.method) {
            continue;
        }
        let Some(fit) = rate.fit else {
            if a.method.is_some() {
                return Err(Failure::runtime(format!(
                    "{}: no rate fit ({})",
                    rate.method,
                    rate.reason.as_deref().unwrap_or("unknown")
                )));
            }
            continue;
        };
        checked += 1;
        let ok = fit.slope >= a.slope_min && fit.slope <= a.slope_max && fit.r2 >= a.r2_min;
        if !ok {
            failed += 1;
        }
        println!(
            "{} {}: slope {:.4} (want [{}, {}]), R^2 {:.4} (want >= {})",
            if ok { "PASS" } else { "FAIL" },
            rate.method,
            fit.slope,
            a.slope_min,
            a.slope_max,
            fit.r2,
            a.r2_min
        );
    }
    if checked == 0 {
        return Err(Failure::usage(match &a.method {
            Some(m) => format!("--method: no method `{m}` in the report"),
            None => "--report: no rate fits to check".to_string(),
        }));
    }
    if failed > 0 {
        return Err(Failure::runtime(format!(
            "{failed} of {checked} rate check(s) failed"
        )));
    }
    Ok(())
}
