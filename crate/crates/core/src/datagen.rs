//! Synthetic data environments: Gaussian designs, heavy-tailed noise,
//! row contamination and AR(1) dependence.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::{dot, Dataset, DatasetMeta, Matrix};
use crate::error::{invalid, Result};
use crate::rng::SeededRng;

const STREAM_DESIGN: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_CORRUPTION: u64 = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// `y = X beta + noise`.
    #[default]
    Regression,
    /// Rows are `mu + noise`; no response.
    Mean,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "regression" => Ok(Task::Regression),
            "mean" => Ok(Task::Mean),
            other => Err(format!("unknown task `{other}` (expected regression|mean)")),
        }
    }
}

/// Noise law. `student_t` and `pareto` are heavy-tailed; `pareto` is the
/// symmetrized Lomax `sign * sigma * (U^(-1/alpha) - 1)`, with infinite
/// variance for `alpha <= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    StudentT { nu: f64, sigma: f64 },
    Pareto { alpha: f64, sigma: f64 },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Gaussian { sigma: 1.0 }
    }
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match *self {
            NoiseSpec::Gaussian { sigma } if !ok(sigma) => invalid("noise sigma must be >= 0"),
            NoiseSpec::StudentT { nu, sigma } if !(nu > 0.0 && nu.is_finite()) || !ok(sigma) => {
                invalid("student_t requires nu > 0 and sigma >= 0")
            }
            NoiseSpec::Pareto { alpha, sigma }
                if !(alpha > 0.0 && alpha.is_finite()) || !ok(sigma) =>
            {
                invalid("pareto requires alpha > 0 and sigma >= 0")
            }
            _ => Ok(()),
        }
    }

    fn sampler(&self) -> NoiseSampler {
        match *self {
            NoiseSpec::Gaussian { sigma } => NoiseSampler::Gaussian(sigma),
            NoiseSpec::StudentT { nu, sigma } => {
                NoiseSampler::StudentT(StudentT::new(nu).expect("validated"), sigma)
            }
            NoiseSpec::Pareto { alpha, sigma } => {
                NoiseSampler::Pareto(Pareto::new(1.0, alpha).expect("validated"), sigma)
            }
        }
    }
}

enum NoiseSampler {
    Gaussian(f64),
    StudentT(StudentT<f64>, f64),
    Pareto(Pareto<f64>, f64),
}

impl NoiseSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseSampler::Gaussian(s) => s * rng.sample::<f64, _>(StandardNormal),
            NoiseSampler::StudentT(t, s) => s * t.sample(rng),
            NoiseSampler::Pareto(p, s) => {
                let magnitude = p.sample(rng) - 1.0;
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * s * magnitude
            }
        }
    }
}

impl std::fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            NoiseSpec::StudentT { nu, sigma } => write!(f, "student_t:{nu},{sigma}"),
            NoiseSpec::Pareto { alpha, sigma } => write!(f, "pareto:{alpha},{sigma}"),
        }
    }
}

impl std::str::FromStr for NoiseSpec {
    type Err = String;

    /// `gaussian:<sigma>`, `student_t:<nu>[,<sigma>]`, `pareto:<alpha>[,<sigma>]`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if params.is_empty() {
            Vec::new()
        } else {
            params
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad noise parameter `{v}`"))
                })
                .collect::<std::result::Result<_, _>>()?
        };
        let noise = match (kind, nums.as_slice()) {
            ("gaussian", []) => NoiseSpec::Gaussian { sigma: 1.0 },
            ("gaussian", [sigma]) => NoiseSpec::Gaussian { sigma: *sigma },
            ("student_t", [nu]) => NoiseSpec::StudentT { nu: *nu, sigma: 1.0 },
            ("student_t", [nu, sigma]) => NoiseSpec::StudentT { nu: *nu, sigma: *sigma },
            ("pareto", [alpha]) => NoiseSpec::Pareto { alpha: *alpha, sigma: 1.0 },
            ("pareto", [alpha, sigma]) => NoiseSpec::Pareto { alpha: *alpha, sigma: *sigma },
            _ => {
                return Err(format!(
                    "bad noise `{s}` (expected gaussian:SIGMA, student_t:NU[,SIGMA] or pareto:ALPHA[,SIGMA])"
                ))
            }
        };
        noise.validate().map_err(|e| e.to_string())?;
        Ok(noise)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dependence {
    #[default]
    Iid,
    /// `row_i = phi row_{i-1} + sqrt(1 - phi^2) fresh_i`.
    Ar1 { phi: f64 },
}

impl std::fmt::Display for Dependence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dependence::Iid => write!(f, "iid"),
            Dependence::Ar1 { phi } => write!(f, "ar1:{phi}"),
        }
    }
}

impl std::str::FromStr for Dependence {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "iid" => Ok(Dependence::Iid),
            Some(("ar1", v)) => {
                let phi: f64 = v
                    .parse()
                    .map_err(|_| format!("bad ar1 coefficient `{v}`"))?;
                if !(phi > -1.0 && phi < 1.0) {
                    return Err(format!("ar1 coefficient must lie in (-1, 1), got {phi}"));
                }
                Ok(Dependence::Ar1 { phi })
            }
            _ => Err(format!("bad dependence `{s}` (expected iid or ar1:PHI)")),
        }
    }
}

fn default_beta_scale() -> f64 {
    1.0
}

/// A synthetic data environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    #[serde(default)]
    pub task: Task,
    pub n: usize,
    pub p: usize,
    /// Number of nonzero entries of the true parameter.
    pub s: usize,
    #[serde(default = "default_beta_scale")]
    pub beta_scale: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Fraction of rows overwritten with uniform garbage.
    #[serde(default)]
    pub contamination: f64,
    #[serde(default)]
    pub c_mag: f64,
    #[serde(default)]
    pub dependence: Dependence,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("n must be >= 1");
        }
        if self.p == 0 {
            return invalid("p must be >= 1");
        }
        if self.s > self.p {
            return invalid(format!("s = {} exceeds p = {}", self.s, self.p));
        }
        if !self.beta_scale.is_finite() {
            return invalid("beta_scale must be finite");
        }
        self.noise.validate()?;
        check_contamination(self.contamination)?;
        if !(self.c_mag.is_finite() && self.c_mag >= 0.0) {
            return invalid("c_mag must be finite and >= 0");
        }
        if let Dependence::Ar1 { phi } = self.dependence {
            if !(phi > -1.0 && phi < 1.0) {
                return invalid(format!("ar1 coefficient must lie in (-1, 1), got {phi}"));
            }
        }
        Ok(())
    }

    /// True parameter: `beta_scale` on the first `s` coordinates, zero elsewhere.
    pub fn true_parameter(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| if j < self.s { self.beta_scale } else { 0.0 })
            .collect()
    }
}

fn check_contamination(eps: f64) -> Result<()> {
    if !(0.0..0.5).contains(&eps) {
        return invalid(format!(
            "contamination fraction must lie in [0, 0.5), got {eps} (breakdown point exceeded)"
        ));
    }
    Ok(())
}

/// Fills an `n x p` matrix with rows from `fresh`, chained by AR(1) when requested.
fn dependent_rows(
    n: usize,
    p: usize,
    dependence: Dependence,
    mut fresh: impl FnMut() -> f64,
) -> Matrix {
    let mut m = Matrix::zeros(n, p);
    let data = m.as_mut_slice();
    match dependence {
        Dependence::Iid => data.iter_mut().for_each(|v| *v = fresh()),
        Dependence::Ar1 { phi } => {
            let innov = (1.0 - phi * phi).sqrt();
            for i in 0..n {
                for j in 0..p {
                    let e = fresh();
                    data[i * p + j] = if i == 0 {
                        e
                    } else {
                        phi * data[(i - 1) * p + j] + innov * e
                    };
                }
            }
        }
    }
    m
}

/// Draws a dataset from `spec`: regression (`y = X beta + noise`) or location
/// (`x_i = beta + noise_i`) according to `spec.task`, then contaminates
/// `floor(contamination * n)` rows.
pub fn generate(spec: &EnvironmentSpec, rng: SeededRng) -> Result<Dataset> {
    match spec.task {
        Task::Regression => gen_linear(spec, rng),
        Task::Mean => gen_location(spec, rng),
    }
}

/// Linear model with standard normal design.
pub fn gen_linear(spec: &EnvironmentSpec, rng: SeededRng) -> Result<Dataset> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let beta = spec.true_parameter();
    let mut gx = rng.substream(STREAM_DESIGN).generator();
    let x = dependent_rows(n, p, spec.dependence, || gx.sample(StandardNormal));
    let noise = spec.noise.sampler();
    let mut ge = rng.substream(STREAM_NOISE).generator();
    let y: Vec<f64> = x
        .iter_rows()
        .map(|row| dot(row, &beta) + noise.sample(&mut ge))
        .collect();
    finish(spec, x, Some(y), beta, rng)
}

/// Location model: every row is the true parameter plus a noise vector.
pub fn gen_location(spec: &EnvironmentSpec, rng: SeededRng) -> Result<Dataset> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mu = spec.true_parameter();
    let noise = spec.noise.sampler();
    let mut ge = rng.substream(STREAM_NOISE).generator();
    let mut x = dependent_rows(n, p, spec.dependence, || noise.sample(&mut ge));
    for i in 0..n {
        for (v, m) in x.row_mut(i).iter_mut().zip(&mu) {
            *v += m;
        }
    }
    finish(spec, x, None, mu, rng)
}

fn finish(
    spec: &EnvironmentSpec,
    x: Matrix,
    y: Option<Vec<f64>>,
    truth: Vec<f64>,
    rng: SeededRng,
) -> Result<Dataset> {
    let mut d = Dataset::new(x, y).with_truth(truth);
    d.meta = DatasetMeta {
        env: Some(spec.clone()),
        corrupted: Vec::new(),
        contaminated_raw: false,
    };
    corrupt_rows(
        d,
        spec.contamination,
        spec.c_mag,
        rng.substream(STREAM_CORRUPTION),
    )
}

/// Replaces `floor(eps * n)` uniformly chosen distinct rows (x and y) by
/// independent uniform draws on `[-c_mag, c_mag]`.
pub fn corrupt_rows(mut d: Dataset, eps: f64, c_mag: f64, rng: SeededRng) -> Result<Dataset> {
    check_contamination(eps)?;
    if !(c_mag.is_finite() && c_mag >= 0.0) {
        return invalid("c_mag must be finite and >= 0");
    }
    let n = d.n();
    let k = (eps * n as f64).floor() as usize;
    if k == 0 {
        return Ok(d);
    }
    let mut g = rng.generator();
    let mut rows = index::sample(&mut g, n, k).into_vec();
    rows.sort_unstable();
    let mut garbage = || g.random_range(-c_mag..=c_mag);
    for &i in &rows {
        for v in d.x.row_mut(i) {
            *v = garbage();
        }
        if let Some(y) = d.y.as_mut() {
            y[i] = garbage();
        }
    }
    let mut corrupted = d.meta.corrupted.clone();
    corrupted.extend(rows);
    corrupted.sort_unstable();
    corrupted.dedup();
    d.meta.corrupted = corrupted;
    Ok(d)
}
