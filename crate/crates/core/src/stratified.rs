//! Stratified subsampling.
//!
//! Rows are ordered by their distance to the coordinate-wise median and cut
//! into `K` equal-count strata. Each stratum receives a proportional share
//! of the budget `m` (largest-remainder rounding), is sampled uniformly
//! without replacement and summarized by a median-of-means estimate. The
//! stratum estimates are combined with the geometric median.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::datagen::Task;
use crate::error::{invalid, Error, Result};
use crate::linalg::weighted_least_squares;
use crate::result::{EstimateResult, Method};
use crate::rng::SeededRng;
use crate::robust::{
    block_order, block_ranges, coordinate_median, geometric_median, median_of_means,
    robust_distances, BlockAssignment, MomConfig, DEFAULT_GM_MAX_ITER, DEFAULT_GM_TOL,
};

/// Ridge applied to every block-wise least-squares fit.
pub const BLOCK_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratConfig {
    pub m: usize,
    #[serde(rename = "K")]
    pub strata: usize,
    #[serde(default)]
    pub task: Task,
    /// Median-of-means blocks per stratum; `None` uses `floor(sqrt(m_k))`.
    #[serde(default)]
    pub mom_blocks: Option<usize>,
    #[serde(default)]
    pub block_assignment: BlockAssignment,
    #[serde(default = "default_gm_tol")]
    pub gm_tol: f64,
}

fn default_gm_tol() -> f64 {
    DEFAULT_GM_TOL
}

impl StratConfig {
    pub fn new(m: usize, strata: usize, task: Task) -> Self {
        Self {
            m,
            strata,
            task,
            mom_blocks: None,
            block_assignment: BlockAssignment::Contiguous,
            gm_tol: DEFAULT_GM_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return invalid("m must be >= 1");
        }
        if self.strata == 0 {
            return invalid("K must be >= 1");
        }
        if self.m < self.strata {
            return invalid(format!(
                "m = {} is smaller than K = {}",
                self.m, self.strata
            ));
        }
        if self.mom_blocks == Some(0) {
            return invalid("mom-blocks must be >= 1");
        }
        if !(self.gm_tol > 0.0) {
            return invalid("gm_tol must be > 0");
        }
        Ok(())
    }
}

/// Equal-count quantile strata of `distances` (stable: ties keep index order).
pub fn stratify_by_distance(distances: &[f64], strata: usize) -> Result<Vec<Vec<usize>>> {
    let n = distances.len();
    if strata == 0 {
        return invalid("K must be >= 1");
    }
    if strata > n {
        return invalid(format!("K = {strata} exceeds n = {n}"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    Ok(block_ranges(n, strata)
        .into_iter()
        .map(|r| order[r].to_vec())
        .collect())
}

/// Quantile strata of the robust distances of `d`.
pub fn stratify(d: &Dataset, strata: usize) -> Result<Vec<Vec<usize>>> {
    if strata > d.n() {
        return invalid(format!("K = {strata} exceeds n = {}", d.n()));
    }
    stratify_by_distance(&robust_distances(d)?, strata)
}

/// Proportional allocation `m |S_k| / n` with largest-remainder rounding,
/// capped at the stratum sizes. Remainder ties go to the lower stratum.
pub fn allocate(sizes: &[usize], m: usize) -> Result<Vec<usize>> {
    let n: usize = sizes.iter().sum();
    if m > n {
        return invalid(format!("m = {m} exceeds the {n} available rows"));
    }
    if n == 0 {
        return Ok(vec![0; sizes.len()]);
    }
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| m as f64 * s as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(sizes)
        .map(|(q, &s)| (q.floor() as usize).min(s))
        .collect();
    let mut left = m - alloc.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..sizes.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    // one unit per stratum per pass, in remainder order, skipping full strata
    while left > 0 {
        let mut progressed = false;
        for &k in &by_remainder {
            if left == 0 {
                break;
            }
            if alloc[k] < sizes[k] {
                alloc[k] += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    Ok(alloc)
}

/// Least-squares fits on consecutive blocks of `rows`, median-combined per coordinate.
fn regression_mom(
    rows: &Matrix,
    targets: &[f64],
    blocks: usize,
    assignment: BlockAssignment,
    rng: SeededRng,
) -> Result<Vec<f64>> {
    let p = rows.cols();
    let order = block_order(rows.rows(), assignment, rng);
    let mut fits = Matrix::zeros(blocks, p);
    for (b, range) in block_ranges(rows.rows(), blocks).into_iter().enumerate() {
        let idx = &order[range];
        let bx = rows.select_rows(idx);
        let by: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
        let len = idx.len() as f64;
        // ||y - X theta||^2 / (2 len) + ridge ||theta||^2 / 2
        let c = vec![1.0 / len; idx.len()];
        let sol = weighted_least_squares(&bx, &by, &c, BLOCK_RIDGE, &vec![0.0; p]);
        fits.row_mut(b).copy_from_slice(&sol.theta);
    }
    coordinate_median(&fits)
}

pub fn run_stratified(d: &Dataset, cfg: &StratConfig, rng: SeededRng) -> Result<EstimateResult> {
    cfg.validate()?;
    let n = d.n();
    if cfg.m > n {
        return invalid(format!("m = {} exceeds n = {n}", cfg.m));
    }
    let targets = match cfg.task {
        Task::Regression => Some(d.y.as_ref().ok_or_else(|| {
            Error::InvalidArgument("regression task requires a response column".into())
        })?),
        Task::Mean => None,
    };
    let strata = stratify(d, cfg.strata)?;
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let alloc = allocate(&sizes, cfg.m)?;

    let mut estimates: Vec<Vec<f64>> = Vec::new();
    let mut warnings = Vec::new();
    for (k, (members, &mk)) in strata.iter().zip(&alloc).enumerate() {
        let blocks = cfg
            .mom_blocks
            .unwrap_or_else(|| MomConfig::auto(mk).n_blocks);
        if mk == 0 || mk < blocks {
            warnings.push(format!(
                "stratum {k} skipped: {mk} sampled rows for {blocks} blocks"
            ));
            continue;
        }
        let stream = rng.substream(k as u64);
        let mut g = stream.generator();
        let picked: Vec<usize> = index::sample(&mut g, members.len(), mk)
            .into_iter()
            .map(|j| members[j])
            .collect();
        let rows = d.x.select_rows(&picked);
        let mom_rng = stream.substream(0);
        let est = match targets {
            None => {
                let mom = MomConfig {
                    n_blocks: blocks,
                    block_assignment: cfg.block_assignment,
                };
                median_of_means(&rows, &mom, mom_rng)?
            }
            Some(y) => {
                let t: Vec<f64> = picked.iter().map(|&i| y[i]).collect();
                regression_mom(&rows, &t, blocks, cfg.block_assignment, mom_rng)?
            }
        };
        estimates.push(est);
    }
    if estimates.is_empty() {
        return Err(Error::EstimationFailure(
            "every stratum was skipped; increase m or reduce K / mom-blocks".into(),
        ));
    }
    let points = Matrix::from_rows(&estimates)?;
    let gm = geometric_median(&points, cfg.gm_tol, DEFAULT_GM_MAX_ITER)?;
    if !gm.converged {
        warnings.push(format!(
            "geometric median stopped at max_iter = {DEFAULT_GM_MAX_ITER}"
        ));
    }
    Ok(EstimateResult {
        theta: gm.point,
        method: Method::Stratified,
        iterations: gm.iterations,
        objective_trace: vec![gm.objective],
        ess: None,
        warnings,
    })
}
