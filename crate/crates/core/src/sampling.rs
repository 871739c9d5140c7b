//! Selection-probability vectors and weighted subsample draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::SeededRng;

/// Tolerance on `sum(w) == 1`.
pub const SUM_TOL: f64 = 1e-12;

/// Default share of uniform mass mixed into adaptive weights.
pub const DEFAULT_MIX_LAMBDA: f64 = 0.05;

/// A probability vector over the `n` observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Wraps an already normalized probability vector.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return invalid("weight vector must be non-empty");
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("weights must be finite and non-negative");
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > SUM_TOL * w.len().max(1) as f64 {
            return invalid(format!("weights sum to {total}, expected 1"));
        }
        Ok(Self(w))
    }

    /// Normalizes non-negative masses to a probability vector.
    pub fn normalized(mass: Vec<f64>) -> Result<Self> {
        if mass.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("weight masses must be finite and non-negative");
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return invalid("weight masses sum to zero");
        }
        Ok(Self(mass.into_iter().map(|v| v / total).collect()))
    }

    /// `w <- (1 - lambda) w + lambda / n`, giving every entry at least `lambda / n`.
    pub fn mix_uniform(&self, lambda: f64) -> Self {
        let n = self.0.len() as f64;
        Self(
            self.0
                .iter()
                .map(|w| (1.0 - lambda) * w + lambda / n)
                .collect(),
        )
    }

    /// Effective sample size `1 / sum(w_i^2)`.
    pub fn ess(&self) -> f64 {
        1.0 / self.0.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

impl std::str::FromStr for SampleMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "with" | "with-replacement" => Ok(Self::WithReplacement),
            "without" | "without-replacement" => Ok(Self::WithoutReplacement),
            other => Err(format!("unknown sampling mode `{other}`")),
        }
    }
}

/// Selected row indices with the selection weight of each at draw time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleDraw {
    pub indices: Vec<usize>,
    pub probs: Vec<f64>,
    pub mode: SampleMode,
}

impl SubsampleDraw {
    /// Uniform-probability draw over explicit indices, out of `n` rows.
    pub fn uniform(indices: Vec<usize>, n: usize, mode: SampleMode) -> Self {
        let probs = vec![1.0 / n as f64; indices.len()];
        Self {
            indices,
            probs,
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Draws `m` indices with probability proportional to `weights`.
///
/// With replacement: inverse-CDF lookup of `m` independent uniforms on the
/// running sum of the weights. Without replacement: Efraimidis-Spirakis
/// keys `u^(1/w_i)`, keeping the `m` largest (ties by lower index).
/// Zero-weight indices are never selected.
pub fn draw_weighted(
    weights: &WeightVector,
    m: usize,
    mode: SampleMode,
    rng: SeededRng,
) -> Result<SubsampleDraw> {
    let w = weights.as_slice();
    let n = w.len();
    if m == 0 {
        return invalid("m must be >= 1");
    }
    let mut g = rng.generator();
    let indices: Vec<usize> = match mode {
        SampleMode::WithReplacement => {
            let mut cum = Vec::with_capacity(n);
            let mut acc = 0.0;
            for &v in w {
                acc += v;
                cum.push(acc);
            }
            let total = acc;
            (0..m)
                .map(|_| {
                    let u = g.random::<f64>() * total;
                    let i = cum.partition_point(|&c| c <= u);
                    // rounding at the top end lands past the last positive weight
                    if i >= n {
                        last_positive(w)
                    } else {
                        i
                    }
                })
                .collect()
        }
        SampleMode::WithoutReplacement => {
            if m > n {
                return invalid(format!(
                    "m = {m} exceeds n = {n} in without-replacement mode"
                ));
            }
            let positive = w.iter().filter(|v| **v > 0.0).count();
            if m > positive {
                return invalid(format!(
                    "m = {m} exceeds the {positive} indices with positive weight"
                ));
            }
            let mut keyed: Vec<(f64, usize)> = w
                .iter()
                .enumerate()
                .map(|(i, &wi)| {
                    let u: f64 = g.random();
                    let key = if wi > 0.0 {
                        u.ln() / wi
                    } else {
                        f64::NEG_INFINITY
                    };
                    (key, i)
                })
                .collect();
            keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            keyed.truncate(m);
            keyed.into_iter().map(|(_, i)| i).collect()
        }
    };
    let probs = indices.iter().map(|&i: &usize| w[i]).collect();
    Ok(SubsampleDraw {
        indices,
        probs,
        mode,
    })
}

fn last_positive(w: &[f64]) -> usize {
    w.iter().rposition(|v| *v > 0.0).unwrap_or(w.len() - 1)
}
