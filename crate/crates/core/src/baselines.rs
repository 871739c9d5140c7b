//! Reference estimators: least squares, ridge and lasso, on the full
//! sample or on the rows of a draw. No intercept is fitted.

use crate::data::{Dataset, Matrix};
use crate::error::{invalid, Error, Result};
use crate::linalg::weighted_least_squares;
use crate::result::{EstimateResult, Method};
use crate::sampling::SubsampleDraw;

/// Lasso penalty as a fraction of `lambda_max` when none is given.
pub const DEFAULT_LASSO_FRACTION: f64 = 0.1;

/// The rows used by a fit: all rows, or the draw's indices (repeats kept).
fn design(d: &Dataset, draw: Option<&SubsampleDraw>) -> Result<(Matrix, Vec<f64>)> {
    let y = d
        .y
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("regression baselines require a response".into()))?;
    match draw {
        None => {
            if d.n() == 0 {
                return invalid("dataset has no rows");
            }
            Ok((d.x.clone(), y.clone()))
        }
        Some(draw) => {
            if draw.is_empty() {
                return invalid("subsample is empty");
            }
            if let Some(&bad) = draw.indices.iter().find(|&&i| i >= d.n()) {
                return invalid(format!("draw index {bad} out of range for n = {}", d.n()));
            }
            let t = draw.indices.iter().map(|&i| y[i]).collect();
            Ok((d.x.select_rows(&draw.indices), t))
        }
    }
}

fn squared_objective(x: &Matrix, y: &[f64], theta: &[f64], ridge: f64) -> f64 {
    let m = x.rows() as f64;
    let rss: f64 = x
        .iter_rows()
        .zip(y)
        .map(|(r, yi)| {
            let e = yi - crate::data::dot(r, theta);
            e * e
        })
        .sum();
    rss / (2.0 * m) + 0.5 * ridge * theta.iter().map(|v| v * v).sum::<f64>()
}

/// Least squares; minimum-norm (with a warning) when rank-deficient.
pub fn fit_ols(d: &Dataset, draw: Option<&SubsampleDraw>) -> Result<EstimateResult> {
    let mut r = fit_ridge(d, 0.0, draw)?;
    r.method = Method::Ols;
    Ok(r)
}

/// Minimizes `||y - X theta||^2 / (2 m) + lambda ||theta||^2 / 2` over the chosen rows.
pub fn fit_ridge(d: &Dataset, lambda: f64, draw: Option<&SubsampleDraw>) -> Result<EstimateResult> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(format!("ridge lambda must be >= 0, got {lambda}"));
    }
    let (x, y) = design(d, draw)?;
    let m = x.rows();
    let c = vec![1.0 / m as f64; m];
    let sol = weighted_least_squares(&x, &y, &c, lambda, &vec![0.0; d.p()]);
    let obj = squared_objective(&x, &y, &sol.theta, lambda);
    Ok(EstimateResult {
        theta: sol.theta,
        method: Method::Ridge,
        iterations: 1,
        objective_trace: vec![obj],
        ess: None,
        warnings: sol.warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// `max_j |x_j' y| / m` over the chosen rows: the smallest penalty with an all-zero solution.
pub fn lasso_lambda_max(d: &Dataset, draw: Option<&SubsampleDraw>) -> Result<f64> {
    let (x, y) = design(d, draw)?;
    Ok(correlations(&x, &y)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max))
}

fn correlations(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let m = x.rows() as f64;
    let mut g = vec![0.0; x.cols()];
    for (r, yi) in x.iter_rows().zip(y) {
        for (gj, v) in g.iter_mut().zip(r) {
            *gj += v * yi;
        }
    }
    g.iter_mut().for_each(|v| *v /= m);
    g
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `||y - X theta||^2 / (2 m) + lambda ||theta||_1`.
///
/// `lambda = None` uses `0.1 * lambda_max`. Stops when the largest
/// coordinate change in a sweep falls below `tol`; the objective after
/// every sweep is recorded in the trace.
pub fn fit_lasso(
    d: &Dataset,
    lambda: Option<f64>,
    draw: Option<&SubsampleDraw>,
    settings: LassoSettings,
) -> Result<EstimateResult> {
    let (x, y) = design(d, draw)?;
    let (m, p) = (x.rows(), x.cols());
    let lambda = match lambda {
        Some(l) if !(l >= 0.0 && l.is_finite()) => {
            return invalid(format!("lasso lambda must be >= 0, got {l}"))
        }
        Some(l) => l,
        None => {
            DEFAULT_LASSO_FRACTION
                * correlations(&x, &y)
                    .into_iter()
                    .map(f64::abs)
                    .fold(0.0, f64::max)
        }
    };
    let mf = m as f64;
    // column-major copy for the coordinate sweeps
    let mut cols = vec![0.0; m * p];
    for (i, r) in x.iter_rows().enumerate() {
        for (j, v) in r.iter().enumerate() {
            cols[j * m + i] = *v;
        }
    }
    let sq_norm: Vec<f64> = (0..p)
        .map(|j| cols[j * m..(j + 1) * m].iter().map(|v| v * v).sum::<f64>() / mf)
        .collect();

    let objective = |theta: &[f64], resid: &[f64]| -> f64 {
        resid.iter().map(|e| e * e).sum::<f64>() / (2.0 * mf)
            + lambda * theta.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut theta = vec![0.0; p];
    let mut resid = y.clone();
    let mut trace = vec![objective(&theta, &resid)];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < settings.max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if sq_norm[j] == 0.0 {
                continue;
            }
            let col = &cols[j * m..(j + 1) * m];
            let old = theta[j];
            let rho =
                col.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / mf + sq_norm[j] * old;
            let new = soft_threshold(rho, lambda) / sq_norm[j];
            let delta = new - old;
            if delta != 0.0 {
                for (e, a) in resid.iter_mut().zip(col) {
                    *e -= delta * a;
                }
                theta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        let obj = objective(&theta, &resid);
        let prev = *trace.last().unwrap();
        if obj > prev + 1e-12 * prev.abs().max(1.0)
            && !warnings
                .iter()
                .any(|w: &String| w.starts_with("objective increased"))
        {
            warnings.push(format!(
                "objective increased at sweep {sweeps}: {prev} -> {obj}"
            ));
        }
        trace.push(obj);
        if max_change < settings.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "lasso reached max_iter = {} before tolerance",
            settings.max_iter
        ));
    }
    Ok(EstimateResult {
        theta,
        method: Method::Lasso,
        iterations: sweeps,
        objective_trace: trace,
        ess: None,
        warnings,
    })
}
