//! Dense weighted least-squares kernels.

use nalgebra::{DMatrix, DVector};

use crate::data::Matrix;

/// Relative scale of the numerical stabilizer used when `m < p`.
pub(crate) const UNDERDETERMINED_STABILIZER: f64 = 1e-8;

/// Pivot threshold (relative to the largest Gram diagonal) below which the
/// normal equations are treated as singular.
const RANK_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub(crate) struct LsSolution {
    pub theta: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Minimizes `1/2 sum_j c_j (t_j - x_j' theta)^2 + ridge/2 ||theta||^2`.
///
/// When `ridge == 0` and the system is singular (in particular `m < p`) the
/// minimizer is not unique; the one closest to `init` is returned, which is
/// the minimum-norm solution for `init = 0`.
pub(crate) fn weighted_least_squares(
    x: &Matrix,
    t: &[f64],
    c: &[f64],
    ridge: f64,
    init: &[f64],
) -> LsSolution {
    let (m, p) = (x.rows(), x.cols());
    debug_assert_eq!(t.len(), m);
    debug_assert_eq!(c.len(), m);
    debug_assert_eq!(init.len(), p);
    if m < p {
        return dual_solve(x, t, c, ridge, init);
    }

    // sqrt(C) X stored column-major as its transpose: column j = sqrt(c_j) x_j
    let sc: Vec<f64> = c.iter().map(|v| v.sqrt()).collect();
    let mut scaled = Vec::with_capacity(m * p);
    for (row, s) in x.iter_rows().zip(&sc) {
        scaled.extend(row.iter().map(|v| v * s));
    }
    let bt = DMatrix::from_vec(p, m, scaled);
    let st = DVector::from_iterator(m, t.iter().zip(&sc).map(|(ti, s)| ti * s));
    let b = bt.transpose();
    let mut gram = &bt * &b;
    let rhs = &bt * &st;
    let max_diag = (0..p).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
    for i in 0..p {
        gram[(i, i)] += ridge;
    }
    if let Some(chol) = gram.clone().cholesky() {
        let l = chol.l_dirty();
        let min_pivot = (0..p)
            .map(|i| l[(i, i)] * l[(i, i)])
            .fold(f64::INFINITY, f64::min);
        if ridge > 0.0 || min_pivot > RANK_TOL * max_diag.max(f64::MIN_POSITIVE) {
            let theta = chol.solve(&rhs);
            return LsSolution {
                theta: theta.iter().copied().collect(),
                warnings: Vec::new(),
            };
        }
    }
    if ridge > 0.0 {
        // ridge > 0 always gives a positive definite system; reaching here
        // means catastrophic scaling, so fall through to the SVD route on the
        // augmented system.
        let mut aug = DMatrix::zeros(m + p, p);
        aug.view_mut((0, 0), (m, p)).copy_from(&b);
        for i in 0..p {
            aug[(m + i, i)] = ridge.sqrt();
        }
        let mut rhs_aug = DVector::zeros(m + p);
        rhs_aug.rows_mut(0, m).copy_from(&st);
        let theta = svd_min_norm(aug, rhs_aug, &vec![0.0; p]);
        return LsSolution {
            theta,
            warnings: vec!["ill-conditioned ridge system solved by SVD".into()],
        };
    }
    let theta = svd_min_norm(b, st, init);
    LsSolution {
        theta,
        warnings: vec!["rank-deficient design: returned minimum-norm solution".into()],
    }
}

/// Least-squares solution of `a (init + delta) = rhs` with minimal `||delta||`.
fn svd_min_norm(a: DMatrix<f64>, rhs: DVector<f64>, init: &[f64]) -> Vec<f64> {
    let p = a.ncols();
    let init_v = DVector::from_column_slice(init);
    let resid = &rhs - &a * &init_v;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * (p.max(resid.len()) as f64);
    let delta = svd.solve(&resid, eps).unwrap_or_else(|_| DVector::zeros(p));
    (init_v + delta).iter().copied().collect()
}

/// `m < p`: works in the m-dimensional dual.
fn dual_solve(x: &Matrix, t: &[f64], c: &[f64], ridge: f64, init: &[f64]) -> LsSolution {
    let (m, p) = (x.rows(), x.cols());
    let xt = DMatrix::from_column_slice(p, m, x.as_slice());
    let mut kernel = xt.transpose() * &xt;
    let mut warnings = Vec::new();
    let (rho, base): (f64, Vec<f64>) = if ridge > 0.0 {
        (ridge, vec![0.0; p])
    } else {
        let trace: f64 = x
            .iter_rows()
            .zip(c)
            .map(|(r, cj)| cj * r.iter().map(|v| v * v).sum::<f64>())
            .sum();
        warnings.push(format!(
            "under-determined system (m = {m} < p = {p}): returned minimum-norm correction to the starting point"
        ));
        (UNDERDETERMINED_STABILIZER * trace / p as f64, init.to_vec())
    };
    for j in 0..m {
        kernel[(j, j)] += rho / c[j];
    }
    let resid = DVector::from_iterator(
        m,
        x.iter_rows()
            .zip(t)
            .map(|(r, tj)| tj - crate::data::dot(r, &base)),
    );
    let alpha = match kernel.clone().cholesky() {
        Some(ch) => ch.solve(&resid),
        None => {
            warnings.push("singular dual system solved by SVD".into());
            let svd = kernel.svd(true, true);
            let eps = svd.singular_values.max() * 1e-12 * m as f64;
            svd.solve(&resid, eps).unwrap_or_else(|_| DVector::zeros(m))
        }
    };
    let delta = &xt * alpha;
    let theta = base.iter().zip(delta.iter()).map(|(b, d)| b + d).collect();
    LsSolution { theta, warnings }
}
