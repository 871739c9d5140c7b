//! Seeded experiment harness: method x subsample size x replicate sweeps
//! with MSE aggregation and log-log rate fits.
//!
//! Replicate `r` draws its dataset from stream `(seed, r)`; every fit in
//! that replicate uses a sub-stream of it labelled by method and grid
//! position, so any cell can be rerun in isolation. Everything in the
//! report except the `timing` object is a pure function of the spec.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ais::{run_ais, AisConfig, Beta};
use crate::baselines::{fit_lasso, fit_ols, fit_ridge, LassoSettings};
use crate::data::{write_atomic, Dataset};
use crate::datagen::{generate, EnvironmentSpec, Task};
use crate::error::{invalid, Error, Result};
use crate::loss::LossKind;
use crate::result::{EstimateResult, Method};
use crate::rng::SeededRng;
use crate::robust::{BlockAssignment, DEFAULT_GM_TOL};
use crate::sampling::{draw_weighted, SampleMode, WeightVector, DEFAULT_MIX_LAMBDA};
use crate::stratified::{run_stratified, StratConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "ROBUST_SUBSAMPLE_THREADS";

/// Sub-stream labels for fits start here, clear of the generator's labels.
const FIT_STREAM_BASE: u64 = 1 << 32;

/// `(1/p) ||theta_hat - truth||^2`.
pub fn mse(theta_hat: &[f64], truth: &[f64]) -> Result<f64> {
    if theta_hat.len() != truth.len() {
        return invalid(format!(
            "length mismatch: estimate has {}, truth has {}",
            theta_hat.len(),
            truth.len()
        ));
    }
    if truth.is_empty() {
        return invalid("empty parameter vectors");
    }
    Ok(sq_dist(theta_hat, truth) / truth.len() as f64)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(ln m, ln error)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return invalid(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        ));
    }
    if let Some((m, e)) = points.iter().find(|(m, e)| !(*m > 0.0) || !(*e > 0.0)) {
        return invalid(format!(
            "rate fit needs positive m and error, got ({m}, {e})"
        ));
    }
    let xs: Vec<f64> = points.iter().map(|(m, _)| m.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return invalid("rate fit needs at least two distinct m values");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    // a flat series is fit exactly by the flat line
    let r2 = if ss_tot <= f64::EPSILON * k * my.abs().max(1.0) {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RateFit {
        slope,
        intercept,
        r2,
    })
}

fn default_rounds() -> usize {
    5
}

fn default_strata() -> usize {
    10
}

fn default_lambda() -> f64 {
    DEFAULT_MIX_LAMBDA
}

fn default_gm_tol() -> f64 {
    DEFAULT_GM_TOL
}

/// One estimator in a sweep. Subsample methods use `m` from the grid;
/// `full = true` fits the whole dataset and ignores `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodSpec {
    Ais {
        #[serde(rename = "T", default = "default_rounds")]
        rounds: usize,
        #[serde(default)]
        beta: Beta,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        loss: LossKind,
        #[serde(default)]
        mode: SampleMode,
    },
    Stratified {
        #[serde(rename = "K", default = "default_strata")]
        strata: usize,
        #[serde(default)]
        mom_blocks: Option<usize>,
        #[serde(default)]
        block_assignment: BlockAssignment,
        #[serde(default = "default_gm_tol")]
        gm_tol: f64,
    },
    Ols {
        #[serde(default)]
        full: bool,
    },
    Ridge {
        lambda: f64,
        #[serde(default)]
        full: bool,
    },
    Lasso {
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        full: bool,
    },
    UniformSubsample {},
}

impl MethodSpec {
    pub fn method(&self) -> Method {
        match self {
            MethodSpec::Ais { .. } => Method::Ais,
            MethodSpec::Stratified { .. } => Method::Stratified,
            MethodSpec::Ols { .. } => Method::Ols,
            MethodSpec::Ridge { .. } => Method::Ridge,
            MethodSpec::Lasso { .. } => Method::Lasso,
            MethodSpec::UniformSubsample {} => Method::UniformSubsample,
        }
    }

    fn is_full(&self) -> bool {
        matches!(
            self,
            MethodSpec::Ols { full: true }
                | MethodSpec::Ridge { full: true, .. }
                | MethodSpec::Lasso { full: true, .. }
        )
    }
}

/// A method with an optional display label (defaults to the method tag).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: MethodSpec,
}

impl MethodEntry {
    pub fn new(spec: MethodSpec) -> Self {
        Self { label: None, spec }
    }

    pub fn labelled(label: impl Into<String>, spec: MethodSpec) -> Self {
        Self {
            label: Some(label.into()),
            spec,
        }
    }

    pub fn name(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => {
                let base = self.spec.method().to_string();
                if self.spec.is_full() {
                    format!("{base}-full")
                } else {
                    base
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub env: EnvironmentSpec,
    pub methods: Vec<MethodEntry>,
    pub m_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.replicates == 0 {
            return invalid("replicates must be >= 1");
        }
        if self.methods.is_empty() {
            return invalid("at least one method is required");
        }
        if self.m_grid.is_empty() {
            return invalid("m_grid must not be empty");
        }
        if self.m_grid.contains(&0) {
            return invalid("m_grid entries must be >= 1");
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("m_grid must be strictly ascending");
        }
        if self.seed.is_none() {
            return invalid("a seed is required");
        }
        let mut names: Vec<String> = self.methods.iter().map(MethodEntry::name).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return invalid("method labels must be unique; add `label` to duplicates");
        }
        Ok(())
    }
}

/// Fits one configured method on a dataset at subsample size `m`.
pub fn fit_method(
    spec: &MethodSpec,
    d: &Dataset,
    m: usize,
    rng: SeededRng,
) -> Result<EstimateResult> {
    let n = d.n();
    let uniform_draw = |rng: SeededRng| {
        draw_weighted(
            &WeightVector::uniform(n),
            m,
            SampleMode::WithoutReplacement,
            rng,
        )
    };
    match spec {
        MethodSpec::Ais {
            rounds,
            beta,
            lambda,
            loss,
            mode,
        } => {
            let cfg = AisConfig {
                m,
                rounds: *rounds,
                beta: *beta,
                loss: *loss,
                mix_lambda: *lambda,
                mode: *mode,
            };
            run_ais(d, &cfg, rng)
        }
        MethodSpec::Stratified {
            strata,
            mom_blocks,
            block_assignment,
            gm_tol,
        } => {
            let task = if d.is_regression() {
                Task::Regression
            } else {
                Task::Mean
            };
            let cfg = StratConfig {
                m,
                strata: *strata,
                task,
                mom_blocks: *mom_blocks,
                block_assignment: *block_assignment,
                gm_tol: *gm_tol,
            };
            run_stratified(d, &cfg, rng)
        }
        MethodSpec::Ols { full } => {
            let draw = if *full {
                None
            } else {
                Some(uniform_draw(rng)?)
            };
            fit_ols(d, draw.as_ref())
        }
        MethodSpec::Ridge { lambda, full } => {
            let draw = if *full {
                None
            } else {
                Some(uniform_draw(rng)?)
            };
            fit_ridge(d, *lambda, draw.as_ref())
        }
        MethodSpec::Lasso { lambda, full } => {
            let draw = if *full {
                None
            } else {
                Some(uniform_draw(rng)?)
            };
            fit_lasso(d, *lambda, draw.as_ref(), LassoSettings::default())
        }
        MethodSpec::UniformSubsample {} => {
            let draw = uniform_draw(rng)?;
            let mut r = if d.is_regression() {
                fit_ols(d, Some(&draw))?
            } else {
                let p = d.p();
                let mut mean = vec![0.0; p];
                for &i in &draw.indices {
                    for (a, v) in mean.iter_mut().zip(d.x.row(i)) {
                        *a += v;
                    }
                }
                mean.iter_mut().for_each(|a| *a /= m as f64);
                EstimateResult::new(Method::UniformSubsample, mean)
            };
            r.method = Method::UniformSubsample;
            Ok(r)
        }
    }
}

/// One (method, m, replicate) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: String,
    pub m: usize,
    pub replicate: usize,
    pub stream_id: u64,
    pub substream: u64,
    pub mse: Option<f64>,
    /// `||theta_hat - truth||_2`.
    pub error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub m: usize,
    pub ok: usize,
    pub failed: usize,
    pub mean_mse: Option<f64>,
    pub median_mse: Option<f64>,
    pub std_mse: Option<f64>,
    pub median_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRate {
    pub method: String,
    pub fit: Option<RateFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub method: String,
    pub m: usize,
    pub replicate: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub method: String,
    pub m: usize,
    pub mean_wall_ms: f64,
    pub median_wall_ms: f64,
    pub max_wall_ms: f64,
}

/// Clock-dependent part of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds since the Unix epoch at completion.
    pub timestamp: u64,
    pub total_wall_ms: f64,
    pub threads: usize,
    pub summary: Vec<TimingSummary>,
    pub cells: Vec<CellTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub library_version: String,
    pub seed: u64,
    pub spec: ExperimentSpec,
    pub summary: Vec<Summary>,
    pub rate_fits: Vec<MethodRate>,
    pub cells: Vec<Cell>,
    pub timing: Timing,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The report without its `timing` object.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn summary_for(&self, method: &str, m: usize) -> Option<&Summary> {
        self.summary.iter().find(|s| s.method == method && s.m == m)
    }

    /// Cells of one method at one `m`, ordered by replicate.
    pub fn cells_for(&self, method: &str, m: usize) -> Vec<&Cell> {
        let mut v: Vec<&Cell> = self
            .cells
            .iter()
            .filter(|c| c.method == method && c.m == m)
            .collect();
        v.sort_by_key(|c| c.replicate);
        v
    }

    /// `method,m,replicate,mse,wall_ms` per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,m,replicate,mse,wall_ms\n");
        for (c, t) in self.cells.iter().zip(&self.timing.cells) {
            let mse = c.mse.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.method, c.m, c.replicate, mse, t.wall_ms
            ));
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Worker count from `ROBUST_SUBSAMPLE_THREADS` (unset or 0 means automatic).
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a non-negative integer, got `{v}`"
            ))
        }),
        _ => Ok(0),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_experiment_with_threads(spec, threads_from_env()?)
}

struct RawCell {
    cell: Cell,
    wall_ms: f64,
}

/// Runs the sweep on `threads` workers (0 = one per core).
pub fn run_experiment_with_threads(
    spec: &ExperimentSpec,
    threads: usize,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let seed = spec.seed.expect("validated");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let started = Instant::now();
    let per_replicate: Vec<Result<Vec<RawCell>>> = pool.install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|r| run_replicate(spec, seed, r))
            .collect()
    });
    let mut raw = Vec::new();
    for cells in per_replicate {
        raw.extend(cells?);
    }
    // deterministic order: method (spec order), m, replicate
    let method_pos = |name: &str| {
        spec.methods
            .iter()
            .position(|e| e.name() == name)
            .unwrap_or(usize::MAX)
    };
    raw.sort_by(|a, b| {
        (method_pos(&a.cell.method), a.cell.m, a.cell.replicate).cmp(&(
            method_pos(&b.cell.method),
            b.cell.m,
            b.cell.replicate,
        ))
    });

    let mut summary = Vec::new();
    let mut timing_summary = Vec::new();
    let mut rate_fits = Vec::new();
    for entry in &spec.methods {
        let name = entry.name();
        let mut rate_points = Vec::new();
        for &m in &spec.m_grid {
            let group: Vec<&RawCell> = raw
                .iter()
                .filter(|c| c.cell.method == name && c.cell.m == m)
                .collect();
            let s = summarize(&name, m, group.iter().map(|c| &c.cell));
            if let Some(e) = s.median_error {
                rate_points.push((m as f64, e));
            }
            summary.push(s);
            let mut walls: Vec<f64> = group.iter().map(|c| c.wall_ms).collect();
            walls.sort_by(f64::total_cmp);
            timing_summary.push(TimingSummary {
                method: name.clone(),
                m,
                mean_wall_ms: walls.iter().sum::<f64>() / walls.len().max(1) as f64,
                median_wall_ms: sorted_median(&walls).unwrap_or(0.0),
                max_wall_ms: walls.last().copied().unwrap_or(0.0),
            });
        }
        let rate = if entry.spec.is_full() {
            MethodRate {
                method: name,
                fit: None,
                reason: Some("full-sample method does not depend on m".into()),
            }
        } else {
            match fit_rate(&rate_points) {
                Ok(fit) => MethodRate {
                    method: name,
                    fit: Some(fit),
                    reason: None,
                },
                Err(e) => MethodRate {
                    method: name,
                    fit: None,
                    reason: Some(e.to_string()),
                },
            }
        };
        rate_fits.push(rate);
    }

    let timing = Timing {
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        total_wall_ms: started.elapsed().as_secs_f64() * 1e3,
        threads: pool.current_num_threads(),
        summary: timing_summary,
        cells: raw
            .iter()
            .map(|c| CellTiming {
                method: c.cell.method.clone(),
                m: c.cell.m,
                replicate: c.cell.replicate,
                wall_ms: c.wall_ms,
            })
            .collect(),
    };
    Ok(ExperimentReport {
        schema: SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        spec: spec.clone(),
        summary,
        rate_fits,
        cells: raw.into_iter().map(|c| c.cell).collect(),
        timing,
    })
}

fn run_replicate(spec: &ExperimentSpec, seed: u64, r: usize) -> Result<Vec<RawCell>> {
    let base = SeededRng::new(seed, r as u64);
    let d = generate(&spec.env, base)?;
    let truth = d.truth.clone().expect("generated data carries truth");
    let mut out = Vec::new();
    for (mi, entry) in spec.methods.iter().enumerate() {
        let name = entry.name();
        // full-sample fits do not depend on m; fit once and reuse
        let mut full_fit: Option<(std::result::Result<EstimateResult, String>, f64)> = None;
        for (gi, &m) in spec.m_grid.iter().enumerate() {
            let label = FIT_STREAM_BASE + ((mi as u64) << 16) + gi as u64;
            let (fit, wall_ms) = if entry.spec.is_full() {
                full_fit
                    .get_or_insert_with(|| {
                        timed(|| {
                            fit_method(
                                &entry.spec,
                                &d,
                                m,
                                base.substream(FIT_STREAM_BASE + ((mi as u64) << 16)),
                            )
                        })
                    })
                    .clone()
            } else {
                timed(|| fit_method(&entry.spec, &d, m, base.substream(label)))
            };
            let cell = match fit {
                Ok(res) if res.is_finite() => {
                    let sq = sq_dist(&res.theta, &truth);
                    Cell {
                        method: name.clone(),
                        m,
                        replicate: r,
                        stream_id: r as u64,
                        substream: label,
                        mse: Some(sq / truth.len() as f64),
                        error: Some(sq.sqrt()),
                        failure: None,
                        warnings: res.warnings.len(),
                    }
                }
                Ok(_) => failed_cell(&name, m, r, label, "non-finite estimate".into()),
                Err(msg) => failed_cell(&name, m, r, label, msg),
            };
            out.push(RawCell { cell, wall_ms });
        }
    }
    Ok(out)
}

fn timed(
    f: impl FnOnce() -> Result<EstimateResult>,
) -> (std::result::Result<EstimateResult, String>, f64) {
    let t = Instant::now();
    let r = f().map_err(|e| e.to_string());
    (r, t.elapsed().as_secs_f64() * 1e3)
}

fn failed_cell(method: &str, m: usize, r: usize, label: u64, msg: String) -> Cell {
    Cell {
        method: method.to_string(),
        m,
        replicate: r,
        stream_id: r as u64,
        substream: label,
        mse: None,
        error: None,
        failure: Some(msg),
        warnings: 0,
    }
}

fn sorted_median(sorted: &[f64]) -> Option<f64> {
    let k = sorted.len();
    if k == 0 {
        return None;
    }
    Some(if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    })
}

/// Aggregates one (method, m) group. Values are sorted before any
/// reduction, so the result does not depend on cell order.
pub fn summarize<'a>(method: &str, m: usize, cells: impl Iterator<Item = &'a Cell>) -> Summary {
    let cells: Vec<&Cell> = cells.collect();
    let mut mses: Vec<f64> = cells.iter().filter_map(|c| c.mse).collect();
    let mut errors: Vec<f64> = cells.iter().filter_map(|c| c.error).collect();
    mses.sort_by(f64::total_cmp);
    errors.sort_by(f64::total_cmp);
    let ok = mses.len();
    let mean = (ok > 0).then(|| mses.iter().sum::<f64>() / ok as f64);
    let std = mean.map(|mu| {
        if ok < 2 {
            0.0
        } else {
            (mses.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (ok - 1) as f64).sqrt()
        }
    });
    Summary {
        method: method.to_string(),
        m,
        ok,
        failed: cells.len() - ok,
        mean_mse: mean,
        median_mse: sorted_median(&mses),
        std_mse: std,
        median_error: sorted_median(&errors),
    }
}
