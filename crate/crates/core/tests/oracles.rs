//! Library results checked against independent computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use robust_subsample::ais::{run_ais, update_weights, AisConfig, Beta};
use robust_subsample::baselines::{fit_lasso, fit_ols, LassoSettings};
use robust_subsample::datagen::{generate, Dependence, EnvironmentSpec, NoiseSpec, Task};
use robust_subsample::loss::{all_losses, weighted_erm, ErmSettings, LossKind};
use robust_subsample::robust::{
    coordinate_median, geometric_median, robust_distances, sum_of_distances, DEFAULT_GM_MAX_ITER,
    DEFAULT_GM_TOL,
};
use robust_subsample::stratified::{run_stratified, stratify, StratConfig};
use robust_subsample::{
    draw_weighted, Dataset, Matrix, SampleMode, SeededRng, SubsampleDraw, WeightVector,
};

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            let pivot_row = a[c].clone();
            for (v, p) in a[r][c..].iter_mut().zip(&pivot_row[c..]) {
                *v -= f * p;
            }
            b[r] -= f * b[c];
        }
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * z[k]).sum();
        z[i] = (b[i] - s) / a[i][i];
    }
    z
}

fn normal_equations(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let p = x.cols();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (row, yi) in x.iter_rows().zip(y) {
        for j in 0..p {
            b[j] += row[j] * yi;
            for k in 0..p {
                a[j][k] += row[j] * row[k];
            }
        }
    }
    solve(a, b)
}

#[test]
fn draw_frequencies_match_weights() {
    let w = WeightVector::new(vec![0.5, 0.3, 0.2]).unwrap();
    let draws = 100_000;
    let d = draw_weighted(
        &w,
        draws,
        SampleMode::WithReplacement,
        SeededRng::new(11, 0),
    )
    .unwrap();
    let mut counts = [0usize; 3];
    for &i in &d.indices {
        counts[i] += 1;
    }
    let mut chi2 = 0.0;
    for (c, p) in counts.iter().zip(w.as_slice()) {
        let freq = *c as f64 / draws as f64;
        assert!((freq - p).abs() < 0.01, "{counts:?}");
        let expected = p * draws as f64;
        chi2 += (*c as f64 - expected).powi(2) / expected;
    }
    // chi-square with 2 degrees of freedom: P(X > 13.8155) = 0.001
    assert!(chi2 < 13.8155, "chi2 = {chi2}");
}

#[test]
fn importance_weighted_loss_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 40;
    let x = normal_matrix(&mut rng, n, 3);
    let y: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0)
        .collect();
    let d = Dataset::new(x, Some(y));
    let theta = [0.5, -1.0, 0.25];
    let losses = all_losses(LossKind::Squared, &theta, &d);
    let full = losses.iter().sum::<f64>() / n as f64;
    let mass: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
    let w = WeightVector::normalized(mass).unwrap();

    let (reps, m) = (10_000, 5);
    let estimates: Vec<f64> = (0..reps)
        .map(|r| {
            let draw =
                draw_weighted(&w, m, SampleMode::WithReplacement, SeededRng::new(12, r)).unwrap();
            draw.indices
                .iter()
                .zip(&draw.probs)
                .map(|(&i, q)| losses[i] / (n as f64 * q))
                .sum::<f64>()
                / m as f64
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / reps as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    assert!(
        (mean - full).abs() < 3.0 * se,
        "mean {mean} full {full} se {se}"
    );
}

#[test]
fn distances_match_direct_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = normal_matrix(&mut rng, 1000, 2);
    let d = Dataset::new(x.clone(), None);
    let dist = robust_distances(&d).unwrap();
    let mut c0: Vec<f64> = x.iter_rows().map(|r| r[0]).collect();
    let mut c1: Vec<f64> = x.iter_rows().map(|r| r[1]).collect();
    c0.sort_by(f64::total_cmp);
    c1.sort_by(f64::total_cmp);
    let med = [0.5 * (c0[499] + c0[500]), 0.5 * (c1[499] + c1[500])];
    let mut far = (0, 0.0);
    for (i, r) in x.iter_rows().enumerate() {
        let want = ((r[0] - med[0]).powi(2) + (r[1] - med[1]).powi(2)).sqrt();
        assert!((dist[i] - want).abs() < 1e-12);
        if want > far.1 {
            far = (i, want);
        }
    }
    let argmax = (0..1000)
        .max_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        .unwrap();
    assert_eq!(argmax, far.0);
}

#[test]
fn gm_unit_square_and_triangle() {
    let sq = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
    let g = geometric_median(&sq, DEFAULT_GM_TOL, DEFAULT_GM_MAX_ITER).unwrap();
    assert!((g.point[0] - 0.5).abs() < 1e-8 && (g.point[1] - 0.5).abs() < 1e-8);

    // the Fermat point of this right triangle, by dense grid and refinement
    let tri = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
    let g = geometric_median(&tri, DEFAULT_GM_TOL, DEFAULT_GM_MAX_ITER).unwrap();
    let (mut cx, mut cy, mut h) = (0.5, 0.5, 0.05);
    let mut best = sum_of_distances(&tri, &[cx, cy]);
    for _ in 0..60 {
        let (mut bx, mut by) = (cx, cy);
        for i in -20..=20 {
            for j in -20..=20 {
                let pt = [cx + i as f64 * h, cy + j as f64 * h];
                let f = sum_of_distances(&tri, &pt);
                if f < best {
                    best = f;
                    bx = pt[0];
                    by = pt[1];
                }
            }
        }
        cx = bx;
        cy = by;
        h *= 0.25;
    }
    assert!(sum_of_distances(&tri, &g.point) - best <= 1e-6);
}

#[test]
fn gm_beats_coordinate_median_and_centroid() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let k = rng.random_range(1..30);
        let pts = normal_matrix(&mut rng, k, 4);
        let g = geometric_median(&pts, DEFAULT_GM_TOL, DEFAULT_GM_MAX_ITER).unwrap();
        let med = coordinate_median(&pts).unwrap();
        let centroid: Vec<f64> = (0..4)
            .map(|j| pts.iter_rows().map(|r| r[j]).sum::<f64>() / k as f64)
            .collect();
        let f = sum_of_distances(&pts, &g.point);
        assert!(f <= sum_of_distances(&pts, &med) + 1e-12);
        assert!(f <= sum_of_distances(&pts, &centroid) + 1e-12);
    }
}

#[test]
fn gm_survives_one_far_point() {
    let rows = [[0.0, 0.0], [1.0, 0.2], [0.3, 1.0], [0.8, 0.9], [1e6, 1e6]];
    let pts = Matrix::from_rows(&rows).unwrap();
    let g = geometric_median(&pts, DEFAULT_GM_TOL, DEFAULT_GM_MAX_ITER).unwrap();
    let clean = Matrix::from_rows(&rows[..4]).unwrap();
    let g0 = geometric_median(&clean, DEFAULT_GM_TOL, DEFAULT_GM_MAX_ITER).unwrap();
    let mut diameter: f64 = 0.0;
    for a in &rows[..4] {
        for b in &rows[..4] {
            diameter = diameter.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
    }
    let shift = ((g.point[0] - g0.point[0]).powi(2) + (g.point[1] - g0.point[1]).powi(2)).sqrt();
    assert!(shift < diameter, "shift {shift}");
    let centroid_x = rows.iter().map(|r| r[0]).sum::<f64>() / 5.0;
    assert!(centroid_x > 1.9e5);
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = normal_matrix(&mut rng, 50, 5);
    let y: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
    let want = normal_equations(&x, &y);
    let got = fit_ols(&Dataset::new(x, Some(y)), None).unwrap();
    for (a, b) in got.theta.iter().zip(&want) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn noiseless_full_ols_recovers_truth() {
    let env = EnvironmentSpec {
        task: Task::Regression,
        n: 200,
        p: 10,
        s: 4,
        beta_scale: 1.5,
        noise: NoiseSpec::Gaussian { sigma: 0.0 },
        contamination: 0.0,
        c_mag: 0.0,
        dependence: Dependence::Iid,
    };
    let d = generate(&env, SeededRng::new(16, 0)).unwrap();
    let r = fit_ols(&d, None).unwrap();
    for (a, b) in r.theta.iter().zip(d.truth.as_ref().unwrap()) {
        assert!((a - b).abs() < 1e-8);
    }
}

fn soft(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

#[test]
fn lasso_orthonormal_design_is_soft_thresholding() {
    // columns of a scaled Hadamard matrix: X'X / m = I
    let h = [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
    ];
    let x = Matrix::from_rows(&h).unwrap();
    let y = vec![3.0, -1.0, 0.5, 2.0];
    let d = Dataset::new(x, Some(y.clone()));
    let lambda = 0.6;
    let r = fit_lasso(&d, Some(lambda), None, LassoSettings::default()).unwrap();
    for (j, t) in r.theta.iter().enumerate() {
        let z: f64 = h.iter().zip(&y).map(|(row, yi)| row[j] * yi).sum::<f64>() / 4.0;
        assert!((t - soft(z, lambda)).abs() < 1e-10, "coordinate {j}");
    }
}

#[test]
fn lasso_satisfies_kkt_and_descends() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (m, p) = (60, 12);
    let x = normal_matrix(&mut rng, m, p);
    let y: Vec<f64> = x
        .iter_rows()
        .map(|r| 2.0 * r[0] - 1.5 * r[3] + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let d = Dataset::new(x.clone(), Some(y.clone()));
    let lambda = 0.2;
    let r = fit_lasso(
        &d,
        Some(lambda),
        None,
        LassoSettings {
            tol: 1e-12,
            max_iter: 100_000,
        },
    )
    .unwrap();
    assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    let resid: Vec<f64> = x
        .iter_rows()
        .zip(&y)
        .map(|(row, yi)| yi - row.iter().zip(&r.theta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    for j in 0..p {
        let g: f64 = x
            .iter_rows()
            .zip(&resid)
            .map(|(row, e)| row[j] * e)
            .sum::<f64>()
            / m as f64;
        if r.theta[j] == 0.0 {
            assert!(g.abs() <= lambda + 1e-8, "coordinate {j}: {g}");
        } else {
            assert!(
                (g - lambda * r.theta[j].signum()).abs() < 1e-8,
                "coordinate {j}: {g}"
            );
        }
    }
    assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn huber_erm_descends_from_init() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..20 {
        let (m, p) = (30, 4);
        let x = normal_matrix(&mut rng, m, p);
        let y: Vec<f64> = (0..m)
            .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let d = Dataset::new(x, Some(y));
        let probs: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..0.1)).collect();
        let draw = SubsampleDraw {
            indices: (0..m).collect(),
            probs,
            mode: SampleMode::WithReplacement,
        };
        let init: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = weighted_erm(
            LossKind::Huber { delta: 1.0 },
            &d,
            &draw,
            &WeightVector::uniform(m),
            &init,
            ErmSettings::default(),
        )
        .unwrap();
        let first = r.objective_trace[0];
        let last = *r.objective_trace.last().unwrap();
        assert!(last <= first);
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn stratified_degenerates_to_sample_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let x = normal_matrix(&mut rng, 25, 3);
    let d = Dataset::new(x.clone(), None);
    let mut cfg = StratConfig::new(25, 1, Task::Mean);
    cfg.mom_blocks = Some(1);
    let r = run_stratified(&d, &cfg, SeededRng::new(19, 0)).unwrap();
    for j in 0..3 {
        let mean = x.iter_rows().map(|row| row[j]).sum::<f64>() / 25.0;
        assert!((r.theta[j] - mean).abs() < 1e-12);
    }
}

fn location_env(eps: f64) -> EnvironmentSpec {
    EnvironmentSpec {
        task: Task::Mean,
        n: 5000,
        p: 20,
        s: 20,
        beta_scale: 1.0,
        noise: NoiseSpec::Gaussian { sigma: 1.0 },
        contamination: eps,
        c_mag: 1e3,
        dependence: Dependence::Iid,
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn stratified_resists_ten_percent_contamination() {
    let mut ratio_ss = Vec::new();
    let mut ratio_mean = Vec::new();
    for r in 0..5 {
        let mut err = Vec::new();
        for eps in [0.0, 0.1] {
            let d = generate(&location_env(eps), SeededRng::new(20, r)).unwrap();
            let truth = d.truth.clone().unwrap();
            let ss = run_stratified(
                &d,
                &StratConfig::new(1000, 5, Task::Mean),
                SeededRng::new(20, 100 + r),
            )
            .unwrap();
            let draw = draw_weighted(
                &WeightVector::uniform(d.n()),
                1000,
                SampleMode::WithoutReplacement,
                SeededRng::new(20, 200 + r),
            )
            .unwrap();
            let mean: Vec<f64> = (0..d.p())
                .map(|j| draw.indices.iter().map(|&i| d.x.get(i, j)).sum::<f64>() / 1000.0)
                .collect();
            err.push((l2(&ss.theta, &truth), l2(&mean, &truth)));
        }
        ratio_ss.push(err[1].0 / err[0].0);
        ratio_mean.push(err[1].1 / err[0].1);
    }
    assert!(ratio_ss.iter().all(|r| *r < 5.0), "{ratio_ss:?}");
    assert!(ratio_mean.iter().all(|r| *r > 50.0), "{ratio_mean:?}");
}

#[test]
fn corrupted_top_stratum_moves_aggregate_less_than_clean_spread() {
    // 2% corrupted with K = 10: every corrupted row lands in the outermost stratum
    let mut clean_env = location_env(0.0);
    clean_env.n = 2000;
    let d0 = generate(&clean_env, SeededRng::new(21, 0)).unwrap();
    let mut dirty_env = clean_env.clone();
    dirty_env.contamination = 0.02;
    let d1 = generate(&dirty_env, SeededRng::new(21, 0)).unwrap();
    let strata = stratify(&d1, 10).unwrap();
    assert!(d1.meta.corrupted.iter().all(|i| strata[9].contains(i)));

    let mut cfg = StratConfig::new(2000, 10, Task::Mean);
    cfg.mom_blocks = Some(1);
    let a = run_stratified(&d0, &cfg, SeededRng::new(21, 1)).unwrap();
    let b = run_stratified(&d1, &cfg, SeededRng::new(21, 1)).unwrap();
    let shift = l2(&a.theta, &b.theta);

    // with m = n and one block, each clean stratum estimate is its mean
    let means: Vec<Vec<f64>> = strata[..9]
        .iter()
        .map(|s| {
            (0..d1.p())
                .map(|j| s.iter().map(|&i| d1.x.get(i, j)).sum::<f64>() / s.len() as f64)
                .collect()
        })
        .collect();
    let mut spread: f64 = 0.0;
    for u in &means {
        for v in &means {
            spread = spread.max(l2(u, v));
        }
    }
    assert!(shift < spread, "shift {shift}, spread {spread}");
}

#[test]
fn ais_with_zero_beta_is_a_uniform_refit() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (n, p) = (300, 5);
    let x = normal_matrix(&mut rng, n, p);
    let y: Vec<f64> = x
        .iter_rows()
        .map(|r| r[0] + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let d = Dataset::new(x, Some(y));
    let (m, rounds) = (40, 3);
    let mut cfg = AisConfig::new(m, rounds);
    cfg.beta = Beta::Fixed(0.0);
    let rng0 = SeededRng::new(22, 0);
    let r = run_ais(&d, &cfg, rng0).unwrap();
    assert!((r.ess.unwrap() - n as f64).abs() < 1e-6);
    // with m >= p the warm start is irrelevant: the result is OLS on the last draw
    let last = draw_weighted(
        &WeightVector::uniform(n),
        m,
        SampleMode::WithReplacement,
        rng0.substream(rounds as u64 - 1),
    )
    .unwrap();
    let want = fit_ols(&d, Some(&last)).unwrap();
    for (a, b) in r.theta.iter().zip(&want.theta) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn ais_final_weights_respect_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 200;
    let x = normal_matrix(&mut rng, n, 3);
    let y: Vec<f64> = x
        .iter_rows()
        .map(|r| r[1] + 2.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let d = Dataset::new(x, Some(y));
    let r = run_ais(&d, &AisConfig::new(50, 4), SeededRng::new(23, 0)).unwrap();
    let ess = r.ess.unwrap();
    assert!((1.0..=n as f64).contains(&ess));
    let losses = all_losses(LossKind::Squared, &r.theta, &d);
    let w = update_weights(&losses, 3.0, 0.05).unwrap();
    assert!(w.as_slice().iter().all(|v| *v >= 0.05 / n as f64 - 1e-18));
}
