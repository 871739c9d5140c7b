//! MSE orderings on the high-dimensional regression benchmark (p = 1000, s = 5, n = 10^4).
//! Only orderings are checked; absolute values depend on the noise scale.

use robust_subsample::ais::Beta;
use robust_subsample::bench::{
    run_experiment_with_threads, ExperimentSpec, MethodEntry, MethodSpec, Outputs,
};
use robust_subsample::datagen::{Dependence, EnvironmentSpec, NoiseSpec, Task};
use robust_subsample::loss::LossKind;
use robust_subsample::robust::BlockAssignment;
use robust_subsample::SampleMode;

fn env(noise: NoiseSpec) -> EnvironmentSpec {
    EnvironmentSpec {
        task: Task::Regression,
        n: 10_000,
        p: 1000,
        s: 5,
        beta_scale: 1.0,
        noise,
        contamination: 0.0,
        c_mag: 0.0,
        dependence: Dependence::Iid,
    }
}

fn ais() -> MethodEntry {
    MethodEntry::labelled(
        "ais",
        MethodSpec::Ais {
            rounds: 10,
            beta: Beta::Auto,
            lambda: 0.05,
            loss: LossKind::Squared,
            mode: SampleMode::WithReplacement,
        },
    )
}

fn run(
    env: EnvironmentSpec,
    methods: Vec<MethodEntry>,
    m: usize,
    replicates: usize,
    seed: u64,
) -> robust_subsample::bench::ExperimentReport {
    let spec = ExperimentSpec {
        env,
        methods,
        m_grid: vec![m],
        replicates,
        seed: Some(seed),
        outputs: Outputs::default(),
    };
    run_experiment_with_threads(&spec, 0).unwrap()
}

#[test]
fn heavy_tailed_ais_beats_uniform_subsample_at_m200() {
    let r = run(
        env(NoiseSpec::StudentT {
            nu: 3.0,
            sigma: 1.0,
        }),
        vec![
            ais(),
            MethodEntry::labelled("uniform", MethodSpec::UniformSubsample {}),
        ],
        200,
        20,
        4242,
    );
    let a = r.cells_for("ais", 200);
    let u = r.cells_for("uniform", 200);
    assert_eq!(a.len(), 20);
    let wins = a
        .iter()
        .zip(&u)
        .filter(|(x, y)| x.replicate == y.replicate && x.mse.unwrap() < y.mse.unwrap())
        .count();
    assert!(wins >= 16, "AIS ahead in {wins}/20 replicates");
}

#[test]
fn gaussian_ais_not_worse_than_stratified_at_m800() {
    let ss = MethodEntry::labelled(
        "ss",
        MethodSpec::Stratified {
            strata: 2,
            mom_blocks: Some(1),
            block_assignment: BlockAssignment::Contiguous,
            gm_tol: 1e-10,
        },
    );
    let r = run(
        env(NoiseSpec::Gaussian { sigma: 0.3 }),
        vec![ais(), ss],
        800,
        8,
        4343,
    );
    let a = r.summary_for("ais", 800).unwrap();
    let s = r.summary_for("ss", 800).unwrap();
    let (am, sm) = (a.mean_mse.unwrap(), s.mean_mse.unwrap());
    // two standard errors of the difference of means
    let slack = 2.0 * ((a.std_mse.unwrap().powi(2) + s.std_mse.unwrap().powi(2)) / 8.0).sqrt();
    assert!(am <= sm + slack, "ais {am} vs ss {sm} (slack {slack})");
}
