//! Experiment drivers: the preconditioner-estimation benchmark grid and the
//! five training problems, all emitting CSV traces and final checkpoints.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use psgd_core::data::{
    load_idx, AdditionSampler, BatchSampler, EqualizerStream, IdxDataset, IdxError, ZebraSampler,
};
use psgd_core::linalg::{cholesky_upper, Matrix};
use psgd_core::metrics::{quality, QualityReport};
use psgd_core::models::{
    isi, make_hessian, secant_pair, EqualizerModel, MlpModel, RnnModel,
};
use psgd_core::oracles::ideal_precond;
use psgd_core::precond::{
    Block, Criterion, KronFactor, PreconditionerLayout, TriFactor,
};
use psgd_core::precond::criterion_cost;
use psgd_core::psgd::{
    run, GradientSource, L2Regularized, OptimizerSettings, OptimizerState, PsgdError,
};

use crate::checkpoint::{self, CheckpointError};
use crate::config::{CriterionChoice, Experiment, ExperimentConfig, LayoutChoice};
use crate::trace::TraceWriter;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("io error on {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric fault at iteration {iteration}; fault row recorded")]
    NumericFault { iteration: u64 },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("optimizer error: {0}")]
    Psgd(PsgdError),
    #[error("{0}")]
    Unsupported(String),
}

fn io_err(file: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        file: file.display().to_string(),
        source,
    }
}

/// Invocation-level options from the command line.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub resume: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            output_dir: PathBuf::from("."),
            jobs: 1,
            resume: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub csv_paths: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

pub fn run_experiment(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<RunOutcome, CliError> {
    std::fs::create_dir_all(&opts.output_dir).map_err(io_err(&opts.output_dir))?;
    match config.experiment {
        Experiment::Fig2Grid => run_fig2(config, opts),
        Experiment::Equalizer => {
            let model = EqualizerModel::default();
            let theta0 = model.initial_taps();
            let stream = EqualizerStream::new(model.taps(), config.batch_size, config.seed);
            let metric = |theta: &[f64]| isi(theta).ok();
            drive_training(config, opts, &model, stream, theta0, None, metric)
        }
        Experiment::Zebra => {
            let model = MlpModel::zebra();
            let theta0 = model.init_parameters(config.seed);
            let shapes = model.layer_shapes();
            let stream = ZebraSampler::new(config.batch_size, config.seed);
            drive_training(config, opts, &model, stream, theta0, Some(&shapes), |_| None)
        }
        Experiment::RnnAddition => {
            let model = RnnModel::addition();
            let theta0 = model.init_parameters(config.seed);
            let shapes = model.layer_shapes();
            let stream = AdditionSampler::new(config.batch_size, config.rnn_length, config.seed);
            drive_training(config, opts, &model, stream, theta0, Some(&shapes), |_| None)
        }
        Experiment::MnistLinear | Experiment::MnistMlp2 | Experiment::MnistMlp3Hinge => {
            let model = match config.experiment {
                Experiment::MnistLinear => MlpModel::mnist_linear(),
                Experiment::MnistMlp2 => MlpModel::mnist_mlp2(),
                _ => MlpModel::mnist_mlp3_hinge(),
            };
            let (train, test) = resolve_mnist(config)?;
            let theta0 = model.init_parameters(config.seed);
            let shapes = model.layer_shapes();
            let stream = BatchSampler::new(&train, config.batch_size, config.seed);
            let metric =
                |theta: &[f64]| Some(test_error(&model, theta, &test));
            let regularized = L2Regularized::new(model.clone(), config.mnist.lambda);
            drive_training(
                config,
                opts,
                &regularized,
                stream,
                theta0,
                Some(&shapes),
                metric,
            )
        }
    }
}

/// Maps layer shapes onto preconditioner blocks: every proper matrix gets a
/// Kronecker block, vector-shaped layers fall back to dense.
fn kron_layout(shapes: &[(usize, usize)]) -> PreconditionerLayout {
    let blocks = shapes
        .iter()
        .map(|&(rows, cols)| {
            if rows == 1 || cols == 1 {
                Block::Dense(TriFactor::identity(rows * cols))
            } else {
                Block::Kron(KronFactor::identity(rows, cols))
            }
        })
        .collect();
    PreconditionerLayout::new(blocks)
}

fn build_layout(
    choice: LayoutChoice,
    shapes: Option<&[(usize, usize)]>,
    dim: usize,
) -> Result<PreconditionerLayout, CliError> {
    Ok(match choice {
        LayoutChoice::Dense => PreconditionerLayout::dense(dim),
        LayoutChoice::LimitedMemory(rank) => PreconditionerLayout::limited_memory(dim, rank),
        LayoutChoice::Kron => match shapes {
            Some(shapes) => kron_layout(shapes),
            None => {
                return Err(CliError::Unsupported(
                    "kron layout requires a layered model".into(),
                ))
            }
        },
    })
}

fn optimizer_settings(config: &ExperimentConfig) -> OptimizerSettings {
    let criterion = match config.criterion {
        CriterionChoice::Criterion(c) => Some(c),
        CriterionChoice::None => None,
        // The oracle path never reaches the optimizer; fig2 handles it.
        CriterionChoice::IdealOracle => None,
    };
    OptimizerSettings {
        criterion,
        norm: config.norm,
        mu_theta0: config.mu_theta0,
        mu_q0: config.mu_q0,
        perturbation_scale: config.perturbation_scale,
        update_every: config.update_every,
    }
}

fn trace_path(config: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    let name = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.experiment.name())));
    if name.is_absolute() {
        name
    } else {
        opts.output_dir.join(name)
    }
}

/// Generic training driver: builds or resumes the optimizer state, runs the
/// requested iterations against the batch stream, traces windowed losses
/// plus the experiment metric, and writes a final checkpoint.
fn drive_training<S, I, M>(
    config: &ExperimentConfig,
    opts: &RunOptions,
    source: &S,
    mut stream: I,
    theta0: Vec<f64>,
    shapes: Option<&[(usize, usize)]>,
    mut metric: M,
) -> Result<RunOutcome, CliError>
where
    S: GradientSource,
    I: Iterator<Item = S::Batch>,
    M: FnMut(&[f64]) -> Option<f64>,
{
    let mut state = match &opts.resume {
        Some(path) => {
            let ck = checkpoint::load(path)?;
            if ck.experiment != config.experiment.name() {
                return Err(CheckpointError::ExperimentMismatch {
                    found: ck.experiment,
                    expected: config.experiment.name().to_string(),
                }
                .into());
            }
            // The data stream is a pure function of (seed, batches drawn);
            // skipping the consumed batches reproduces its state exactly.
            for _ in 0..ck.state.iteration() {
                stream.next();
            }
            ck.state
        }
        None => {
            let layout = build_layout(config.layout, shapes, theta0.len())?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1);
            OptimizerState::new(theta0, layout, optimizer_settings(config), rng)
                .map_err(CliError::Psgd)?
        }
    };

    let csv_path = trace_path(config, opts);
    let mut writer =
        TraceWriter::create(&csv_path, config.record_every).map_err(io_err(&csv_path))?;
    let remaining = config.iterations.saturating_sub(state.iteration());

    let mut io_failure: Option<std::io::Error> = None;
    let result = run(
        &mut state,
        source,
        &mut stream,
        remaining,
        |it, loss, st| {
            if let Some(mean) = writer.observe(loss) {
                let m = metric(st.theta());
                if let Err(e) = writer.write_row(it, mean, m, None) {
                    io_failure.get_or_insert(e);
                }
            }
        },
    );
    if let Some(e) = io_failure {
        return Err(io_err(&csv_path)(e));
    }
    if let Err(e) = result {
        return match e {
            PsgdError::NumericFault { iteration } => {
                let _ = writer.write_row(iteration, f64::NAN, None, None);
                let _ = writer.finish();
                Err(CliError::NumericFault { iteration })
            }
            other => Err(CliError::Psgd(other)),
        };
    }
    writer.finish().map_err(io_err(&csv_path))?;

    let ckpt_path = csv_path.with_extension("ckpt");
    checkpoint::save(&ckpt_path, config.experiment.name(), config.seed, &state)?;
    Ok(RunOutcome {
        csv_paths: vec![csv_path],
        checkpoint: Some(ckpt_path),
    })
}

/// Classification error over a held-out set, evaluated in chunks.
fn test_error(model: &MlpModel, theta: &[f64], test: &IdxDataset) -> f64 {
    let d = test.feature_dim();
    let chunk = 1000;
    let mut wrong = 0usize;
    let mut i = 0;
    while i < test.len() {
        let n = chunk.min(test.len() - i);
        let mut inputs = Matrix::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        for k in 0..n {
            test.write_normalized_image(i + k, inputs.row_mut(k));
            labels.push(test.label(i + k) as usize);
        }
        let pred = model.predict(theta, &inputs);
        wrong += pred.iter().zip(&labels).filter(|(p, l)| p != l).count();
        i += n;
    }
    wrong as f64 / test.len() as f64
}

/// MNIST file resolution: explicit config paths win, then PSGD_DATA_DIR
/// with the standard file names.
fn resolve_mnist(config: &ExperimentConfig) -> Result<(IdxDataset, IdxDataset), CliError> {
    let from_env = |name: &str| -> Option<PathBuf> {
        std::env::var_os("PSGD_DATA_DIR").map(|d| PathBuf::from(d).join(name))
    };
    let pick = |explicit: &Option<PathBuf>, fallback: &str| -> Result<PathBuf, CliError> {
        explicit
            .clone()
            .or_else(|| from_env(fallback))
            .ok_or_else(|| {
                CliError::Unsupported(format!(
                    "missing MNIST path: set [mnist] keys in the config or export PSGD_DATA_DIR containing {fallback}"
                ))
            })
    };
    let images = pick(&config.mnist.images, "train-images-idx3-ubyte")?;
    let labels = pick(&config.mnist.labels, "train-labels-idx1-ubyte")?;
    let test_images = pick(&config.mnist.test_images, "t10k-images-idx3-ubyte")?;
    let test_labels = pick(&config.mnist.test_labels, "t10k-labels-idx1-ubyte")?;
    let mut train = load_idx(&images, &labels)?;
    let test = load_idx(&test_images, &test_labels)?;
    if config.mnist.subset > 0 {
        train.truncate(config.mnist.subset);
    }
    Ok((train, test))
}

/// One cell of the estimation benchmark: which curvature class, noise
/// level, and scale it runs under.
#[derive(Debug, Clone, Copy)]
pub struct Fig2Scenario {
    pub definite: bool,
    pub noisy: bool,
    pub sigma_h_sq: f64,
}

impl Fig2Scenario {
    fn file_name(&self) -> String {
        format!(
            "fig2_{}_{}_{}.csv",
            if self.definite { "definite" } else { "indefinite" },
            if self.noisy { "noisy" } else { "clean" },
            if self.sigma_h_sq < 1.0 { "tiny" } else { "large" }
        )
    }

    fn stream_index(&self) -> u64 {
        (self.definite as u64) * 4 + (self.noisy as u64) * 2 + (self.sigma_h_sq >= 1.0) as u64
    }
}

/// The 2^3 scenario grid, optionally filtered by config keys.
pub fn fig2_scenarios(config: &ExperimentConfig) -> Vec<Fig2Scenario> {
    let mut out = Vec::new();
    for definite in [true, false] {
        if let Some(d) = config.hessian_definite {
            if d != definite {
                continue;
            }
        }
        for noisy in [false, true] {
            for sigma_h_sq in [1e-12, 1e12] {
                if let Some(s) = config.sigma_h_sq {
                    if (s >= 1.0) != (sigma_h_sq >= 1.0) {
                        continue;
                    }
                }
                out.push(Fig2Scenario {
                    definite,
                    noisy,
                    sigma_h_sq,
                });
            }
        }
    }
    out
}

/// Runs one grid cell and returns its trace rows
/// (iteration, cost, quality if computable).
pub fn run_fig2_cell(
    config: &ExperimentConfig,
    scenario: Fig2Scenario,
) -> Result<Vec<(u64, f64, Option<QualityReport>)>, CliError> {
    // The curvature draw shares its stream across scales and noise levels,
    // so scale pairs use proportional matrices.
    let mut h_rng = ChaCha8Rng::seed_from_u64(config.seed);
    h_rng.set_stream(100 + scenario.definite as u64);
    let h = make_hessian(scenario.definite, scenario.sigma_h_sq, &mut h_rng);

    let mut rng_theta = ChaCha8Rng::seed_from_u64(config.seed);
    rng_theta.set_stream(200 + scenario.stream_index());
    let mut rng_noise = ChaCha8Rng::seed_from_u64(config.seed);
    rng_noise.set_stream(300 + scenario.stream_index());
    let snr = scenario.noisy.then_some(config.noise_snr_db);

    let mut layout = build_layout(config.layout, None, h.rows())?;
    let (estimate, criterion) = match config.criterion {
        CriterionChoice::Criterion(c) => (true, c),
        CriterionChoice::None => (false, Criterion::C3),
        CriterionChoice::IdealOracle => {
            let p = ideal_precond(&h).map_err(|e| CliError::Unsupported(e.to_string()))?;
            let q = cholesky_upper(&p).map_err(|e| CliError::Unsupported(e.to_string()))?;
            let factor = TriFactor::from_upper(q)
                .map_err(|e| CliError::Unsupported(e.to_string()))?;
            layout = PreconditionerLayout::new(vec![Block::Dense(factor)]);
            (false, Criterion::C3)
        }
    };

    let mut rows = Vec::new();
    let mut window_sum = 0.0;
    let mut window_count = 0u64;
    for t in 0..config.iterations {
        let pair = secant_pair(
            &h,
            config.perturbation_scale,
            snr,
            &mut rng_theta,
            &mut rng_noise,
        );
        if estimate {
            layout
                .update(criterion, &pair, config.mu_q0, config.norm)
                .map_err(|e| CliError::Psgd(e.into()))?;
        }
        let cost = criterion_cost(criterion, &layout, &pair)
            .map_err(|e| CliError::Psgd(e.into()))?;
        window_sum += cost;
        window_count += 1;
        if window_count == config.record_every {
            let p = layout.implied_preconditioner();
            let q = if p.is_finite() { quality(&h, &p).ok() } else { None };
            rows.push((t + 1, window_sum / window_count as f64, q));
            window_sum = 0.0;
            window_count = 0;
        }
    }
    Ok(rows)
}

fn run_fig2(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let scenarios = fig2_scenarios(config);
    let jobs = opts.jobs.max(1).min(scenarios.len().max(1));
    let mut results: Vec<Option<Result<Vec<(u64, f64, Option<QualityReport>)>, CliError>>> =
        (0..scenarios.len()).map(|_| None).collect();

    if jobs <= 1 {
        for (i, s) in scenarios.iter().enumerate() {
            results[i] = Some(run_fig2_cell(config, *s));
        }
    } else {
        // Independent cells on independent threads.
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in scenarios
                .iter()
                .copied()
                .enumerate()
                .collect::<Vec<_>>()
                .chunks((scenarios.len() + jobs - 1) / jobs)
            {
                let chunk = chunk.to_vec();
                handles.push(scope.spawn(move || {
                    chunk
                        .into_iter()
                        .map(|(i, s)| (i, run_fig2_cell(config, s)))
                        .collect::<Vec<_>>()
                }));
            }
            for h in handles {
                for (i, r) in h.join().expect("scenario thread panicked") {
                    results[i] = Some(r);
                }
            }
        });
    }

    let mut csv_paths = Vec::new();
    for (scenario, result) in scenarios.iter().zip(results) {
        let rows = result.expect("scenario result missing")?;
        let path = opts.output_dir.join(scenario.file_name());
        let mut writer = TraceWriter::create(&path, 1).map_err(io_err(&path))?;
        for (iter, cost, q) in rows {
            writer
                .write_row(iter, cost, None, q.as_ref())
                .map_err(io_err(&path))?;
        }
        writer.finish().map_err(io_err(&path))?;
        csv_paths.push(path);
    }
    Ok(RunOutcome {
        csv_paths,
        checkpoint: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_config;

    #[test]
    fn fig2_grid_has_eight_scenarios() {
        let c = validate_config("experiment = fig2_grid\n").unwrap();
        assert_eq!(fig2_scenarios(&c).len(), 8);
        let filtered = validate_config("experiment = fig2_grid\nhessian = definite\n").unwrap();
        assert_eq!(fig2_scenarios(&filtered).len(), 4);
        let one = validate_config(
            "experiment = fig2_grid\nhessian = definite\nsigma_h_sq = 1e12\nnoise_snr_db = -20\n",
        )
        .unwrap();
        assert_eq!(fig2_scenarios(&one).len(), 2);
    }

    #[test]
    fn kron_layout_puts_vector_layers_in_dense_blocks() {
        let layout = kron_layout(&[(50, 53), (1, 51)]);
        assert_eq!(layout.dim(), 2701);
        assert!(matches!(layout.blocks()[0], Block::Kron(_)));
        assert!(matches!(layout.blocks()[1], Block::Dense(_)));
    }
}
