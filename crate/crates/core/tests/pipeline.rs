mod common;

use corr_rr::harness::{mse_metric, run_experiment, run_once, DatasetSource, ExperimentConfig, RunOptions};
use corr_rr::ingest::{load_csv, read_coded_csv, run_recipe, true_marginals, write_dataset, DatasetMetadata, PreprocessRecipe};
use corr_rr::mechanisms::Mechanism;
use corr_rr::synth::{gen_synthetic, SynthSpec};
use corr_rr::RngStream;

fn config(datasets: Vec<DatasetSource>, mechanisms: Vec<Mechanism>, reps: usize) -> ExperimentConfig {
    ExperimentConfig {
        datasets,
        mechanisms,
        epsilons: vec![1.0],
        phase1_fractions: vec![0.1],
        repetitions: reps,
        seed: 3,
        clamp_before_mse: false,
        prior_fraction: 0.1,
        redraw_data: false,
        record_timing: false,
    }
}

#[test]
fn file_source_matches_in_memory_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { n: 2000, d: 3, k: 4, rho: 0.5, seed: 3 };
    let ds = gen_synthetic(&spec).unwrap();
    let path = dir.path().join("data.csv");
    write_dataset(&ds, &DatasetMetadata::for_synthetic(&spec, &ds), &path).unwrap();
    let (back, _) = read_coded_csv(&path).unwrap();
    assert_eq!(back, ds);

    let from_file = config(
        vec![DatasetSource::File { path: path.clone(), name: None }],
        vec![Mechanism::Spl, Mechanism::CorrRr],
        6,
    );
    let in_memory = config(
        vec![DatasetSource::Synth { n: 2000, d: 3, k: 4, rho: 0.5, seed: Some(3) }],
        vec![Mechanism::Spl, Mechanism::CorrRr],
        6,
    );
    let a = run_experiment(&from_file).unwrap();
    let b = run_experiment(&in_memory).unwrap();
    assert_eq!(a[0].source, "rho=0.5");
    assert_eq!(a, b);
}

#[test]
fn spl_error_does_not_depend_on_correlation() {
    let rows = run_experiment(&config(
        vec![
            DatasetSource::Synth { n: 5000, d: 3, k: 4, rho: 0.0, seed: None },
            DatasetSource::Synth { n: 5000, d: 3, k: 4, rho: 0.9, seed: None },
        ],
        vec![Mechanism::Spl],
        200,
    ))
    .unwrap();
    let (a, b) = (&rows[0], &rows[1]);
    let se = (a.mse_std.powi(2) / 200.0 + b.mse_std.powi(2) / 200.0).sqrt();
    assert!((a.mse_mean - b.mse_mean).abs() < 3.0 * se, "{a:?} {b:?}");
}

#[test]
fn corr_rr_beats_spl_on_correlated_binary_data() {
    let rows = run_experiment(&config(
        vec![DatasetSource::Synth { n: 10_000, d: 2, k: 2, rho: 0.9, seed: None }],
        vec![Mechanism::Spl, Mechanism::CorrRr],
        200,
    ))
    .unwrap();
    assert!(rows[1].mse_mean < rows[0].mse_mean, "{rows:?}");
}

#[test]
fn baseline_estimates_are_unbiased_on_ingested_data() {
    let dir = tempfile::tempdir().unwrap();
    let raw = common::write_fixture(dir.path(), "mushroom.data", &common::mushroom_text(9));
    let ing = run_recipe(&load_csv(&raw, false).unwrap(), &PreprocessRecipe::mushroom()).unwrap();
    assert_eq!(ing.dataset.n(), common::MUSHROOM_ROWS);
    let truth = true_marginals(&ing.dataset);
    let reps = 60;
    for mech in [Mechanism::Spl, Mechanism::RsFd, Mechanism::RsRfd] {
        let mut mean = vec![vec![0.0; 6]; 9];
        for r in 0..reps {
            let mut rng = RngStream::new(17, r, 0);
            let est = run_once(&ing.dataset, mech, 4.0, 0.1, &RunOptions::default(), &mut rng).unwrap();
            assert!(mse_metric(&truth, &est).unwrap().is_finite());
            for (m, row) in mean.iter_mut().zip(est.rows()) {
                for (x, y) in m.iter_mut().zip(row) {
                    *x += y / reps as f64;
                }
            }
        }
        let worst = mean
            .iter()
            .flatten()
            .zip(truth.rows().iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "{mech}: {worst}");
    }
}

#[test]
fn clamped_scoring_is_finite_and_lowers_error() {
    let mut cfg = config(
        vec![DatasetSource::Synth { n: 300, d: 4, k: 10, rho: 0.5, seed: None }],
        Mechanism::ALL.to_vec(),
        20,
    );
    let raw = run_experiment(&cfg).unwrap();
    cfg.clamp_before_mse = true;
    let clamped = run_experiment(&cfg).unwrap();
    for (r, c) in raw.iter().zip(&clamped) {
        assert!(c.mse_mean.is_finite() && c.mse_mean >= 0.0);
        assert!(c.mse_mean <= r.mse_mean, "{r:?} {c:?}");
    }
}
