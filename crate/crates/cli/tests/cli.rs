//! End-to-end runner tests: config validation, trace reproducibility,
//! checkpoint resume, and plain-SGD fidelity.

use std::fs;
use std::path::Path;

use psgd_cli::checkpoint;
use psgd_cli::experiments::{run_experiment, RunOptions};
use psgd_cli::trace::strip_wall_clock;
use psgd_cli::validate_config;

use psgd_core::data::EqualizerStream;
use psgd_core::models::EqualizerModel;
use psgd_core::psgd::GradientSource;

fn run_in(dir: &Path, text: &str, resume: Option<&Path>) -> psgd_cli::RunOutcome {
    let config = validate_config(text).unwrap();
    let opts = RunOptions {
        output_dir: dir.to_path_buf(),
        jobs: 1,
        resume: resume.map(|p| p.to_path_buf()),
    };
    run_experiment(&config, &opts).unwrap()
}

#[test]
fn identical_configs_give_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = equalizer\niterations = 2000\nseed = 5\nmu_theta0 = 0.002\noutput = a.csv\n";
    let a = run_in(dir.path(), text, None);
    let text_b = text.replace("a.csv", "b.csv");
    let b = run_in(dir.path(), &text_b, None);
    let csv_a = fs::read_to_string(&a.csv_paths[0]).unwrap();
    let csv_b = fs::read_to_string(&b.csv_paths[0]).unwrap();
    assert_eq!(strip_wall_clock(&csv_a), strip_wall_clock(&csv_b));
    assert_ne!(csv_a.lines().count(), 1, "trace should contain rows");
}

#[test]
fn record_every_controls_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = equalizer\niterations = 1000\nseed = 1\nmu_theta0 = 0.002\nrecord_every = 100\n";
    let out = run_in(dir.path(), text, None);
    let csv = fs::read_to_string(&out.csv_paths[0]).unwrap();
    // Header plus floor(1000 / 100) rows.
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = "experiment = equalizer\niterations = 1500\nseed = 9\nmu_theta0 = 0.002\noutput = full.csv\n";
    let full_out = run_in(dir.path(), full, None);
    let full_ck = checkpoint::load(full_out.checkpoint.as_ref().unwrap()).unwrap();

    let first = "experiment = equalizer\niterations = 700\nseed = 9\nmu_theta0 = 0.002\noutput = part.csv\n";
    let part_out = run_in(dir.path(), first, None);
    let second = "experiment = equalizer\niterations = 1500\nseed = 9\nmu_theta0 = 0.002\noutput = part2.csv\n";
    let resumed_out = run_in(
        dir.path(),
        second,
        Some(part_out.checkpoint.as_ref().unwrap()),
    );
    let resumed_ck = checkpoint::load(resumed_out.checkpoint.as_ref().unwrap()).unwrap();

    assert_eq!(resumed_ck.state.iteration(), 1500);
    assert_eq!(full_ck.state.theta(), resumed_ck.state.theta());
    assert_eq!(full_ck.state.rng_state(), resumed_ck.state.rng_state());
}

#[test]
fn resume_rejects_wrong_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        "experiment = equalizer\niterations = 100\nseed = 1\nmu_theta0 = 0.002\n",
        None,
    );
    let config =
        validate_config("experiment = zebra\niterations = 100\nseed = 1\n").unwrap();
    let opts = RunOptions {
        output_dir: dir.path().to_path_buf(),
        jobs: 1,
        resume: out.checkpoint.clone(),
    };
    let err = run_experiment(&config, &opts).unwrap_err();
    assert!(err.to_string().contains("experiment"), "{err}");
}

#[test]
fn plain_sgd_trace_matches_hand_written_loop() {
    let dir = tempfile::tempdir().unwrap();
    let seed = 3u64;
    let iters = 400u64;
    let text = format!(
        "experiment = equalizer\ncriterion = none\niterations = {iters}\nseed = {seed}\nmu_theta0 = 0.001\n"
    );
    let out = run_in(dir.path(), &text, None);
    let ck = checkpoint::load(out.checkpoint.as_ref().unwrap()).unwrap();

    // Textbook SGD on the identical stream.
    let model = EqualizerModel::default();
    let mut theta = model.initial_taps();
    let mut stream = EqualizerStream::new(model.taps(), 10, seed);
    for _ in 0..iters {
        let batch = stream.next().unwrap();
        let (_, g) = model.loss_and_gradient(&theta, &batch);
        for (t, gv) in theta.iter_mut().zip(g) {
            *t -= 0.001 * gv;
        }
    }
    assert_eq!(ck.state.theta(), theta.as_slice());
}

#[test]
fn fig2_grid_writes_eight_scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = fig2_grid\niterations = 50\nseed = 2\nrecord_every = 10\n";
    let out = run_in(dir.path(), text, None);
    assert_eq!(out.csv_paths.len(), 8);
    for p in &out.csv_paths {
        let csv = fs::read_to_string(p).unwrap();
        assert_eq!(csv.lines().count(), 6, "{p:?}");
    }
}

#[test]
fn fig2_grid_parallel_jobs_match_serial() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = fig2_grid\niterations = 40\nseed = 6\nrecord_every = 20\n";
    let config = validate_config(text).unwrap();
    let serial_dir = dir.path().join("serial");
    let parallel_dir = dir.path().join("parallel");
    let serial = run_experiment(
        &config,
        &RunOptions {
            output_dir: serial_dir,
            jobs: 1,
            resume: None,
        },
    )
    .unwrap();
    let parallel = run_experiment(
        &config,
        &RunOptions {
            output_dir: parallel_dir,
            jobs: 4,
            resume: None,
        },
    )
    .unwrap();
    for (a, b) in serial.csv_paths.iter().zip(&parallel.csv_paths) {
        let ca = fs::read_to_string(a).unwrap();
        let cb = fs::read_to_string(b).unwrap();
        assert_eq!(strip_wall_clock(&ca), strip_wall_clock(&cb));
    }
}

#[test]
fn validate_prints_back_defaults() {
    let resolved = validate_config("experiment = zebra\n").unwrap();
    let printed = resolved.to_string();
    assert!(printed.contains("experiment = zebra"));
    assert!(printed.contains("criterion = c3"));
    assert!(printed.contains("mu_q0 = 0.01"));
    assert!(printed.contains("seed = 0"));
}

#[test]
fn numeric_fault_reports_iteration_and_records_row() {
    // A huge plain-SGD step makes the CMA cost blow up quickly.
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = equalizer\ncriterion = none\niterations = 4000\nseed = 1\nmu_theta0 = 0.9\nrecord_every = 4000\n";
    let config = validate_config(text).unwrap();
    let opts = RunOptions {
        output_dir: dir.path().to_path_buf(),
        jobs: 1,
        resume: None,
    };
    let err = run_experiment(&config, &opts).unwrap_err();
    assert!(matches!(
        err,
        psgd_cli::CliError::NumericFault { .. }
    ));
    let csv = fs::read_to_string(dir.path().join("equalizer.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    assert!(last.contains("NaN"), "fault row missing: {last}");
}
