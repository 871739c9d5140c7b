//! Per-observation losses and the importance-weighted empirical risk minimizer.
//!
//! Regression rows use the residual `r = y - x'theta`. Rows without a
//! response are location observations with residual vector `x - theta`
//! and loss `rho(||x - theta||)`.

use serde::{Deserialize, Serialize};

use crate::data::{dot, Dataset};
use crate::error::{invalid, Result};
use crate::linalg::weighted_least_squares;
use crate::result::{EstimateResult, Method};
use crate::sampling::{SubsampleDraw, WeightVector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Squared,
    Huber {
        delta: f64,
    },
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossKind::Huber { delta } if !(*delta > 0.0 && delta.is_finite()) => {
                invalid(format!("huber delta must be > 0, got {delta}"))
            }
            _ => Ok(()),
        }
    }

    /// `rho(r)` for a scalar residual magnitude.
    pub fn rho(&self, r: f64) -> f64 {
        match *self {
            LossKind::Squared => 0.5 * r * r,
            LossKind::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    0.5 * r * r
                } else {
                    delta * (a - 0.5 * delta)
                }
            }
        }
    }

    /// `psi(r) / r`, the IRLS weight of a residual.
    fn irls_weight(&self, r: f64) -> f64 {
        match *self {
            LossKind::Squared => 1.0,
            LossKind::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    1.0
                } else {
                    delta / a
                }
            }
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    /// `squared` or `huber:<delta>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "squared" => Ok(LossKind::Squared),
            None if s == "huber" => Ok(LossKind::Huber { delta: 1.345 }),
            Some(("huber", d)) => d
                .parse()
                .map(|delta| LossKind::Huber { delta })
                .map_err(|_| format!("bad huber delta `{d}`")),
            _ => Err(format!("unknown loss `{s}`")),
        }
    }
}

pub fn loss_value(kind: LossKind, theta: &[f64], x: &[f64], y: f64) -> f64 {
    kind.rho(y - dot(x, theta))
}

pub fn loss_gradient(kind: LossKind, theta: &[f64], x: &[f64], y: f64) -> Vec<f64> {
    let r = y - dot(x, theta);
    let psi = r * kind.irls_weight(r);
    x.iter().map(|xi| -psi * xi).collect()
}

/// Location loss `rho(||x - theta||)`; squared gives `||x - theta||^2 / 2`.
pub fn location_loss_value(kind: LossKind, theta: &[f64], x: &[f64]) -> f64 {
    kind.rho(dist(x, theta))
}

pub fn location_loss_gradient(kind: LossKind, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let w = kind.irls_weight(dist(x, theta));
    x.iter().zip(theta).map(|(xi, ti)| -w * (xi - ti)).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// Loss of observation `i` of `d` at `theta`, regression or location.
pub fn point_loss(kind: LossKind, theta: &[f64], d: &Dataset, i: usize) -> f64 {
    match &d.y {
        Some(y) => loss_value(kind, theta, d.x.row(i), y[i]),
        None => location_loss_value(kind, theta, d.x.row(i)),
    }
}

/// Losses of all `n` observations at `theta`.
pub fn all_losses(kind: LossKind, theta: &[f64], d: &Dataset) -> Vec<f64> {
    (0..d.n()).map(|i| point_loss(kind, theta, d, i)).collect()
}

/// Settings of the inner solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErmSettings {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ErmSettings {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Importance-weighted ERM on a subsample:
/// `sum_j L(theta; X_{i_j}) / (m w_{i_j}) + ridge ||theta||^2 / 2`,
/// with `w_{i_j}` the selection weight stored in the draw.
///
/// Squared loss is solved directly (normal equations for `m >= p`, dual
/// system otherwise); Huber by iteratively reweighted least squares started
/// at `init`. With `ridge = 0` and fewer rows than parameters the solution
/// is the minimizer nearest `init` and a warning is attached.
pub fn weighted_erm(
    kind: LossKind,
    d: &Dataset,
    draw: &SubsampleDraw,
    base_weights: &WeightVector,
    init: &[f64],
    settings: ErmSettings,
) -> Result<EstimateResult> {
    kind.validate()?;
    let (n, p) = (d.n(), d.p());
    let m = draw.len();
    if m == 0 {
        return invalid("draw is empty");
    }
    if draw.probs.len() != m {
        return invalid("draw probs and indices differ in length");
    }
    if let Some(&bad) = draw.indices.iter().find(|&&i| i >= n) {
        return invalid(format!("draw index {bad} out of range for n = {n}"));
    }
    if draw.probs.iter().any(|q| !(*q > 0.0)) {
        return invalid("draw probabilities must be > 0");
    }
    if base_weights.len() != n {
        return invalid(format!(
            "base weights have length {}, expected {n}",
            base_weights.len()
        ));
    }
    if init.len() != p {
        return invalid(format!("init has length {}, expected {p}", init.len()));
    }
    if !(settings.ridge >= 0.0) {
        return invalid("ridge must be >= 0");
    }

    let coef: Vec<f64> = draw.probs.iter().map(|q| 1.0 / (m as f64 * q)).collect();
    let rows = d.x.select_rows(&draw.indices);
    let targets: Option<Vec<f64>> =
        d.y.as_ref()
            .map(|y| draw.indices.iter().map(|&i| y[i]).collect());

    let objective = |theta: &[f64]| -> f64 {
        let data: f64 = match &targets {
            Some(t) => rows
                .iter_rows()
                .zip(t)
                .zip(&coef)
                .map(|((x, yj), c)| c * loss_value(kind, theta, x, *yj))
                .sum(),
            None => rows
                .iter_rows()
                .zip(&coef)
                .map(|(x, c)| c * location_loss_value(kind, theta, x))
                .sum(),
        };
        data + 0.5 * settings.ridge * theta.iter().map(|v| v * v).sum::<f64>()
    };

    let mut theta = init.to_vec();
    let mut trace = vec![objective(&theta)];
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let max_iter = if kind == LossKind::Squared {
        1
    } else {
        settings.max_iter.max(1)
    };

    while iterations < max_iter {
        iterations += 1;
        // IRLS weights at the current iterate (all ones for squared loss)
        let irls: Vec<f64> = match &targets {
            Some(t) => rows
                .iter_rows()
                .zip(t)
                .map(|(x, yj)| kind.irls_weight(yj - dot(x, &theta)))
                .collect(),
            None => rows
                .iter_rows()
                .map(|x| kind.irls_weight(dist(x, &theta)))
                .collect(),
        };
        let c: Vec<f64> = coef.iter().zip(&irls).map(|(a, b)| a * b).collect();
        let next = match &targets {
            Some(t) => {
                let sol = weighted_least_squares(&rows, t, &c, settings.ridge, &theta);
                for w in sol.warnings {
                    if !warnings.contains(&w) {
                        warnings.push(w);
                    }
                }
                sol.theta
            }
            None => weighted_location(&rows, &c, settings.ridge),
        };
        let next_obj = objective(&next);
        let step: f64 = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let prev_obj = *trace.last().unwrap();
        if next_obj <= prev_obj || kind == LossKind::Squared {
            theta = next;
            trace.push(next_obj);
        } else {
            // numerical noise at the optimum; keep the better iterate
            converged = true;
            break;
        }
        let scale = 1.0 + theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step <= settings.tol * scale {
            converged = true;
            break;
        }
    }
    if kind != LossKind::Squared && !converged {
        warnings.push(format!(
            "IRLS reached max_iter = {} before tolerance",
            settings.max_iter
        ));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::EstimationFailure(
            "weighted ERM produced a non-finite estimate".into(),
        ));
    }
    Ok(EstimateResult {
        theta,
        method: Method::Ais,
        iterations,
        objective_trace: trace,
        ess: Some(base_weights.ess()),
        warnings,
    })
}

/// Minimizer of `1/2 sum_j c_j ||x_j - theta||^2 + ridge/2 ||theta||^2`.
fn weighted_location(rows: &crate::data::Matrix, c: &[f64], ridge: f64) -> Vec<f64> {
    let p = rows.cols();
    let mut acc = vec![0.0; p];
    let mut total = ridge;
    for (x, cj) in rows.iter_rows().zip(c) {
        total += cj;
        for (a, v) in acc.iter_mut().zip(x) {
            *a += cj * v;
        }
    }
    acc.iter().map(|a| a / total).collect()
}
