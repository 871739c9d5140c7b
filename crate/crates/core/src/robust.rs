//! Robust location primitives: coordinate-wise median, distances to it,
//! median-of-means and the geometric median (Weiszfeld with the
//! Vardi-Zhang correction at data points).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{invalid, Result};
use crate::rng::SeededRng;

pub const DEFAULT_GM_TOL: f64 = 1e-10;
pub const DEFAULT_GM_MAX_ITER: usize = 1000;

/// Iterates within this distance of a data point are treated as sitting on it.
const COINCIDENCE_TOL: f64 = 1e-12;

/// Median of a slice; the midpoint of the two central order statistics for even length.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    })
}

pub fn coordinate_median(points: &Matrix) -> Result<Vec<f64>> {
    if points.rows() == 0 {
        return invalid("coordinate median of an empty point set");
    }
    let mut column = Vec::with_capacity(points.rows());
    Ok((0..points.cols())
        .map(|j| {
            column.clear();
            column.extend(points.iter_rows().map(|r| r[j]));
            median(&column).expect("non-empty")
        })
        .collect())
}

/// Euclidean distance of every row of `x` to the coordinate-wise median.
pub fn robust_distances(d: &Dataset) -> Result<Vec<f64>> {
    let center = coordinate_median(&d.x)?;
    Ok(d.x.iter_rows().map(|r| euclid(r, &center)).collect())
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockAssignment {
    /// Blocks are consecutive runs of rows in input order.
    #[default]
    Contiguous,
    /// Rows are permuted with the supplied stream before splitting.
    Shuffled,
}

impl std::str::FromStr for BlockAssignment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "contiguous" => Ok(Self::Contiguous),
            "shuffled" => Ok(Self::Shuffled),
            other => Err(format!("unknown block assignment `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomConfig {
    pub n_blocks: usize,
    #[serde(default)]
    pub block_assignment: BlockAssignment,
}

impl MomConfig {
    /// `max(1, floor(sqrt(k)))` contiguous blocks.
    pub fn auto(k: usize) -> Self {
        Self {
            n_blocks: ((k as f64).sqrt().floor() as usize).max(1),
            block_assignment: BlockAssignment::Contiguous,
        }
    }
}

/// Splits `0..k` into `blocks` runs whose sizes differ by at most one
/// (the first `k % blocks` runs are one longer).
pub fn block_ranges(k: usize, blocks: usize) -> Vec<std::ops::Range<usize>> {
    let base = k / blocks;
    let extra = k % blocks;
    let mut start = 0;
    (0..blocks)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Row order used to form blocks.
pub(crate) fn block_order(k: usize, assignment: BlockAssignment, rng: SeededRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    if assignment == BlockAssignment::Shuffled {
        order.shuffle(&mut rng.generator());
    }
    order
}

/// Coordinate-wise median of the block means of the rows of `values`.
pub fn median_of_means(values: &Matrix, cfg: &MomConfig, rng: SeededRng) -> Result<Vec<f64>> {
    let (k, p) = (values.rows(), values.cols());
    if cfg.n_blocks == 0 {
        return invalid("n_blocks must be >= 1");
    }
    if k < cfg.n_blocks {
        return invalid(format!(
            "median of means needs at least n_blocks = {} rows, got {k}",
            cfg.n_blocks
        ));
    }
    let order = block_order(k, cfg.block_assignment, rng);
    let mut means = Matrix::zeros(cfg.n_blocks, p);
    for (b, range) in block_ranges(k, cfg.n_blocks).into_iter().enumerate() {
        let len = range.len() as f64;
        let out = means.row_mut(b);
        for &i in &order[range] {
            for (o, v) in out.iter_mut().zip(values.row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= len);
    }
    coordinate_median(&means)
}

/// Geometric median with convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMedian {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of Euclidean distances at `point`.
    pub objective: f64,
}

/// Sum of Euclidean distances from `y` to the rows of `points`.
pub fn sum_of_distances(points: &Matrix, y: &[f64]) -> f64 {
    points.iter_rows().map(|a| euclid(a, y)).sum()
}

/// Weiszfeld iteration started at the coordinate-wise median, stopping
/// when the step norm drops below `tol`.
///
/// When the iterate lands on a data point the Vardi-Zhang rule applies:
/// the point is optimal if the pull of the other points has norm at most
/// its multiplicity, otherwise the step is taken away from it.
pub fn geometric_median(points: &Matrix, tol: f64, max_iter: usize) -> Result<GeometricMedian> {
    let k = points.rows();
    if k == 0 {
        return invalid("geometric median of an empty point set");
    }
    if !(tol > 0.0) {
        return invalid("tol must be > 0");
    }
    if points.as_slice().iter().any(|v| !v.is_finite()) {
        return invalid("geometric median input contains non-finite values");
    }
    let p = points.cols();
    let mut y = coordinate_median(points)?;
    if k == 1 {
        return Ok(GeometricMedian {
            objective: 0.0,
            point: y,
            iterations: 0,
            converged: true,
        });
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut num = vec![0.0; p];
    let mut pull = vec![0.0; p];
    while iterations < max_iter {
        iterations += 1;
        num.iter_mut().for_each(|v| *v = 0.0);
        pull.iter_mut().for_each(|v| *v = 0.0);
        let mut denom = 0.0;
        let mut multiplicity = 0.0;
        for a in points.iter_rows() {
            let dist = euclid(a, &y);
            if dist <= COINCIDENCE_TOL {
                multiplicity += 1.0;
                continue;
            }
            let w = 1.0 / dist;
            denom += w;
            for j in 0..p {
                num[j] += w * a[j];
                pull[j] += w * (a[j] - y[j]);
            }
        }
        if denom == 0.0 {
            // every point coincides with y
            converged = true;
            break;
        }
        let weiszfeld: Vec<f64> = num.iter().map(|v| v / denom).collect();
        let next: Vec<f64> = if multiplicity > 0.0 {
            let pull_norm = pull.iter().map(|v| v * v).sum::<f64>().sqrt();
            if pull_norm <= multiplicity {
                converged = true;
                break;
            }
            let keep = multiplicity / pull_norm;
            weiszfeld
                .iter()
                .zip(&y)
                .map(|(t, yj)| (1.0 - keep) * t + keep * yj)
                .collect()
        } else {
            weiszfeld
        };
        let step = euclid(&next, &y);
        y = next;
        if step < tol {
            converged = true;
            break;
        }
    }
    Ok(GeometricMedian {
        objective: sum_of_distances(points, &y),
        point: y,
        iterations,
        converged,
    })
}
