//! Adaptive importance sampling.
//!
//! Each round draws `m` rows with the current selection weights, refits
//! the importance-weighted ERM (warm-started at the previous estimate),
//! evaluates the loss of all `n` rows at the new estimate and resets the
//! weights to `w_i ∝ exp(-beta L_i)` mixed with a uniform floor.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::loss::{all_losses, weighted_erm, ErmSettings, LossKind};
use crate::result::{EstimateResult, Method};
use crate::rng::SeededRng;
use crate::robust::median;
use crate::sampling::{draw_weighted, SampleMode, WeightVector, DEFAULT_MIX_LAMBDA};

/// Temperature of the exponential weight update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Beta {
    Fixed(f64),
    /// `1 / median(losses)` measured once, after the first round.
    #[default]
    Auto,
}

impl std::str::FromStr for Beta {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Beta::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| format!("beta must be a number or `auto`, got `{s}`"))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(format!("beta must be >= 0, got {v}"));
        }
        Ok(Beta::Fixed(v))
    }
}

impl std::fmt::Display for Beta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Beta::Fixed(v) => write!(f, "{v}"),
            Beta::Auto => f.write_str("auto"),
        }
    }
}

// JSON form: a number or the string "auto".
impl Serialize for Beta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Beta::Fixed(v) => s.serialize_f64(*v),
            Beta::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Beta::Fixed(v).checked().map_err(serde::de::Error::custom),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Beta {
    fn checked(self) -> std::result::Result<Self, String> {
        match self {
            Beta::Fixed(v) if !(v >= 0.0 && v.is_finite()) => {
                Err(format!("beta must be >= 0, got {v}"))
            }
            b => Ok(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisConfig {
    pub m: usize,
    #[serde(rename = "T")]
    pub rounds: usize,
    #[serde(default)]
    pub beta: Beta,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_lambda")]
    pub mix_lambda: f64,
    #[serde(default)]
    pub mode: SampleMode,
}

fn default_lambda() -> f64 {
    DEFAULT_MIX_LAMBDA
}

impl AisConfig {
    pub fn new(m: usize, rounds: usize) -> Self {
        Self {
            m,
            rounds,
            beta: Beta::Auto,
            loss: LossKind::Squared,
            mix_lambda: DEFAULT_MIX_LAMBDA,
            mode: SampleMode::WithReplacement,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return invalid("m must be >= 1");
        }
        if self.rounds == 0 {
            return invalid("T must be >= 1");
        }
        if !(0.0..=0.5).contains(&self.mix_lambda) {
            return invalid(format!(
                "lambda must lie in [0, 0.5], got {}",
                self.mix_lambda
            ));
        }
        self.beta.checked().map_err(Error::InvalidArgument)?;
        self.loss.validate()
    }
}

/// `w_i ∝ exp(-beta (L_i - min L))`, then mixed with uniform by `mix_lambda`.
///
/// Infinite losses get zero mass before mixing; at least one loss must be finite.
pub fn update_weights(losses: &[f64], beta: f64, mix_lambda: f64) -> Result<WeightVector> {
    if losses.is_empty() {
        return invalid("no losses");
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return invalid(format!("beta must be >= 0, got {beta}"));
    }
    if !(0.0..=1.0).contains(&mix_lambda) {
        return invalid(format!(
            "mixing weight must lie in [0, 1], got {mix_lambda}"
        ));
    }
    if losses.iter().any(|l| l.is_nan()) {
        return invalid("losses contain NaN");
    }
    let min = losses
        .iter()
        .copied()
        .filter(|l| l.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return invalid("all losses are infinite");
    }
    let mass: Vec<f64> = losses
        .iter()
        .map(|&l| {
            if l.is_finite() {
                (-beta * (l - min)).exp()
            } else {
                0.0
            }
        })
        .collect();
    Ok(WeightVector::normalized(mass)?.mix_uniform(mix_lambda))
}

/// Runs `cfg.rounds` rounds from `theta = 0` and uniform weights.
///
/// Rows without a response are treated as a location problem with loss
/// `rho(||x - theta||)`. The objective trace holds the mean loss over all
/// `n` rows after each round.
pub fn run_ais(d: &Dataset, cfg: &AisConfig, rng: SeededRng) -> Result<EstimateResult> {
    cfg.validate()?;
    let (n, p) = (d.n(), d.p());
    if n == 0 || p == 0 {
        return invalid("dataset is empty");
    }
    if cfg.mode == SampleMode::WithoutReplacement && cfg.m > n {
        return invalid(format!("m = {} exceeds n = {n} without replacement", cfg.m));
    }
    let settings = ErmSettings::default();
    let mut theta = vec![0.0; p];
    let mut weights = WeightVector::uniform(n);
    let mut beta = match cfg.beta {
        Beta::Fixed(b) => Some(b),
        Beta::Auto => None,
    };
    let mut trace = Vec::with_capacity(cfg.rounds);
    let mut warnings: Vec<String> = Vec::new();
    for round in 0..cfg.rounds {
        let draw = draw_weighted(&weights, cfg.m, cfg.mode, rng.substream(round as u64))?;
        let fit = weighted_erm(cfg.loss, d, &draw, &weights, &theta, settings)?;
        for w in fit.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        theta = fit.theta;
        let losses = all_losses(cfg.loss, &theta, d);
        trace.push(losses.iter().sum::<f64>() / n as f64);
        let b = *beta.get_or_insert_with(|| auto_beta(&losses));
        weights = update_weights(&losses, b, cfg.mix_lambda)?;
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::EstimationFailure(
            "AIS produced a non-finite estimate".into(),
        ));
    }
    Ok(EstimateResult {
        theta,
        method: Method::Ais,
        iterations: cfg.rounds,
        objective_trace: trace,
        ess: Some(weights.ess()),
        warnings,
    })
}

fn auto_beta(losses: &[f64]) -> f64 {
    match median(losses) {
        Some(med) if med > 0.0 && med.is_finite() => 1.0 / med,
        // zero median loss: more than half the rows are fit exactly
        _ => {
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            if mean > 0.0 && mean.is_finite() {
                1.0 / mean
            } else {
                1.0
            }
        }
    }
}
