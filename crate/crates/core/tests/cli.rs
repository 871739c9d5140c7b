use std::path::Path;
use std::process::{Command, Output};

use robust_subsample::bench::{ExperimentSpec, MethodEntry, MethodSpec, Outputs};
use robust_subsample::datagen::{Dependence, EnvironmentSpec, NoiseSpec, Task};
use serde_json::Value;

fn cli<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_robust-subsample"))
        .args(args)
        .env("ROBUST_SUBSAMPLE_THREADS", "1")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn generate(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join("d.csv");
    let mut args = vec![
        "generate", "--n", "200", "--p", "5", "--s", "2", "--seed", "3", "--out",
    ];
    let out_str = out.to_str().unwrap().to_owned();
    args.push(&out_str);
    args.extend_from_slice(extra);
    let o = cli(&args);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    out
}

fn small_spec() -> ExperimentSpec {
    ExperimentSpec {
        env: EnvironmentSpec {
            task: Task::Regression,
            n: 300,
            p: 5,
            s: 2,
            beta_scale: 1.0,
            noise: NoiseSpec::StudentT {
                nu: 3.0,
                sigma: 1.0,
            },
            contamination: 0.0,
            c_mag: 0.0,
            dependence: Dependence::Iid,
        },
        methods: vec![
            MethodEntry::new(MethodSpec::UniformSubsample {}),
            MethodEntry::new(MethodSpec::Ols { full: true }),
        ],
        m_grid: vec![20, 40, 80],
        replicates: 3,
        seed: Some(5),
        outputs: Outputs::default(),
    }
}

#[test]
fn generate_writes_data_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = generate(
        dir.path(),
        &[
            "--noise",
            "student_t:3,1.0",
            "--eps",
            "0.1",
            "--c-mag",
            "50",
        ],
    );
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("x1,x2,x3,x4,x5,y"), "{}", &body[..40]);
    assert_eq!(body.lines().count(), 201);
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["truth"].as_array().unwrap().len(), 5);
    assert_eq!(meta["corrupted"].as_array().unwrap().len(), 20);
    assert!(meta["spec"].is_object());
    assert!(meta["library_version"].is_string());
}

#[test]
fn generate_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = generate(dir.path(), &[]);
    for method in [
        "ais",
        "stratified",
        "ols",
        "ridge",
        "lasso",
        "uniform-subsample",
    ] {
        let o = cli([
            "estimate",
            "--data",
            csv.to_str().unwrap(),
            "--method",
            method,
            "--m",
            "50",
            "--K",
            "2",
        ]);
        assert_eq!(o.status.code(), Some(0), "{method}: {}", text(&o));
        let stdout = String::from_utf8_lossy(&o.stdout);
        let start = stdout.find('{').unwrap();
        let v: Value = serde_json::from_str(&stdout[start..]).unwrap();
        assert!(v["config"].is_object(), "{method}");
        assert!(v["result"].is_object(), "{method}");
        assert!(v["mse"].as_f64().unwrap() >= 0.0, "{method}");
    }
}

#[test]
fn estimate_reports_default_seed() {
    let dir = tempfile::tempdir().unwrap();
    let csv = generate(dir.path(), &[]);
    let o = cli(["estimate", "--data", csv.to_str().unwrap(), "--m", "30"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o).contains("seed: 0 (default)"), "{}", text(&o));
}

#[test]
fn zero_subsample_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = generate(dir.path(), &[]);
    let o = cli(["estimate", "--data", csv.to_str().unwrap(), "--m", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = text(&o);
    assert!(
        msg.contains("--m") && msg.contains("m must be ≥ 1"),
        "{msg}"
    );
}

#[test]
fn bad_flags_exit_one() {
    assert_eq!(cli(["estimate", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        cli(["generate", "--out", "/tmp/x.csv", "--noise", "cauchy:1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(cli(["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let csv = generate(dir.path(), &[]);
    assert_eq!(
        cli(["estimate", "--data", csv.to_str().unwrap(), "--beta", "-1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = generate(dir.path(), &[]);
    let o = cli([
        "estimate",
        "--data",
        csv.to_str().unwrap(),
        "--method",
        "stratified",
        "--K",
        "2",
        "--m",
        "2",
        "--mom-blocks",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let csv = generate(dir.path(), &[]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"m": 0, "method": "uniform-subsample"}"#).unwrap();
    let base = [
        "--config",
        cfg.to_str().unwrap(),
        "estimate",
        "--data",
        csv.to_str().unwrap(),
    ];
    assert_eq!(cli(base).status.code(), Some(1));
    let o = cli(base.iter().copied().chain(["--m", "25"]));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("uniform-subsample"));
}

#[test]
fn help_documents_defaults() {
    for sub in ["generate", "estimate", "bench", "rate-check"] {
        let o = cli([sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let help = text(&o);
        let mut in_options = false;
        for line in help.lines() {
            if line.starts_with("Options:") {
                in_options = true;
                continue;
            }
            let t = line.trim_start();
            if !in_options || !t.starts_with("--") || t.starts_with("--help") {
                continue;
            }
            let flag = t.split_whitespace().next().unwrap();
            let is_flag = |l: &str| l.split_whitespace().next() == Some(flag);
            // description may wrap onto the next lines
            let block: String = help
                .lines()
                .skip_while(|l| !is_flag(l))
                .take_while(|l| is_flag(l) || !l.trim_start().starts_with('-'))
                .collect();
            assert!(
                block.contains("[default:") || block.contains("(required)"),
                "{sub} {flag} lacks a default: {block}"
            );
        }
    }
    let help = text(&cli(["generate", "--help"]));
    for form in ["gaussian:SIGMA", "student_t:NU,SIGMA", "pareto:ALPHA,SIGMA"] {
        assert!(help.contains(form), "{form} missing from {help}");
    }
}

#[test]
fn bench_and_rate_check() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, serde_json::to_string(&small_spec()).unwrap()).unwrap();
    let run = |name: &str| -> Value {
        let out = dir.path().join(name);
        let csv = out.with_extension("csv");
        let o = cli([
            "bench",
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        let rows = std::fs::read_to_string(&csv).unwrap();
        assert!(rows.starts_with("method,m,replicate,mse,wall_ms"));
        // the full-sample fit is reused at every grid point
        assert_eq!(rows.lines().count(), 1 + 2 * 3 * 3);
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    let a = run("a.json");
    let b = run("b.json");
    assert_eq!(a, b);

    let report = dir.path().join("a.json");
    let pass = cli([
        "rate-check",
        "--report",
        report.to_str().unwrap(),
        "--method",
        "uniform-subsample",
        "--slope-min",
        "-10",
        "--slope-max",
        "10",
        "--r2-min",
        "0",
    ]);
    assert_eq!(pass.status.code(), Some(0), "{}", text(&pass));
    assert!(text(&pass).contains("PASS"));
    let fail = cli([
        "rate-check",
        "--report",
        report.to_str().unwrap(),
        "--slope-min",
        "5",
        "--slope-max",
        "6",
    ]);
    assert_eq!(fail.status.code(), Some(2), "{}", text(&fail));
    assert!(text(&fail).contains("FAIL"));
}

#[test]
fn bench_without_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let mut s = small_spec();
    s.seed = None;
    std::fs::write(&spec, serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(
        cli(["bench", "--spec", spec.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    let o = cli([
        "bench",
        "--spec",
        spec.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
}
