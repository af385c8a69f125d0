//! Flat key=value experiment configuration with optional [section] headers.
//! Unknown keys are rejected and every violation is reported with its key
//! path.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use psgd_core::precond::{Criterion, StepNorm};
use psgd_core::psgd::DEFAULT_PERTURBATION_SCALE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fig2Grid,
    Equalizer,
    Zebra,
    RnnAddition,
    MnistLinear,
    MnistMlp2,
    MnistMlp3Hinge,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Fig2Grid => "fig2_grid",
            Experiment::Equalizer => "equalizer",
            Experiment::Zebra => "zebra",
            Experiment::RnnAddition => "rnn_addition",
            Experiment::MnistLinear => "mnist_linear",
            Experiment::MnistMlp2 => "mnist_mlp2",
            Experiment::MnistMlp3Hinge => "mnist_mlp3_hinge",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "fig2_grid" => Experiment::Fig2Grid,
            "equalizer" => Experiment::Equalizer,
            "zebra" => Experiment::Zebra,
            "rnn_addition" => Experiment::RnnAddition,
            "mnist_linear" => Experiment::MnistLinear,
            "mnist_mlp2" => Experiment::MnistMlp2,
            "mnist_mlp3_hinge" => Experiment::MnistMlp3Hinge,
            _ => return None,
        })
    }

    fn is_mnist(&self) -> bool {
        matches!(
            self,
            Experiment::MnistLinear | Experiment::MnistMlp2 | Experiment::MnistMlp3Hinge
        )
    }
}

/// Which preconditioner drives the parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionChoice {
    Criterion(Criterion),
    /// Plain SGD, no preconditioning.
    None,
    /// Closed-form ideal preconditioner from the known curvature
    /// (fig2_grid only).
    IdealOracle,
}

impl CriterionChoice {
    pub fn name(&self) -> &'static str {
        match self {
            CriterionChoice::Criterion(Criterion::C1) => "c1",
            CriterionChoice::Criterion(Criterion::C2) => "c2",
            CriterionChoice::Criterion(Criterion::C3) => "c3",
            CriterionChoice::None => "none",
            CriterionChoice::IdealOracle => "ideal-oracle",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "c1" => CriterionChoice::Criterion(Criterion::C1),
            "c2" => CriterionChoice::Criterion(Criterion::C2),
            "c3" => CriterionChoice::Criterion(Criterion::C3),
            "none" | "plain" => CriterionChoice::None,
            "ideal-oracle" => CriterionChoice::IdealOracle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutChoice {
    Dense,
    /// Kronecker-factored block per network layer, direct-summed.
    Kron,
    /// Single limited-memory triangular block of the given rank.
    LimitedMemory(usize),
}

impl LayoutChoice {
    pub fn name(&self) -> String {
        match self {
            LayoutChoice::Dense => "dense".to_string(),
            LayoutChoice::Kron => "kron".to_string(),
            LayoutChoice::LimitedMemory(r) => format!("lm:{r}"),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        if s == "dense" {
            return Some(LayoutChoice::Dense);
        }
        if s == "kron" {
            return Some(LayoutChoice::Kron);
        }
        if let Some(rank) = s.strip_prefix("lm:") {
            return rank.parse().ok().map(LayoutChoice::LimitedMemory);
        }
        None
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub criterion: CriterionChoice,
    pub layout: LayoutChoice,
    pub mu_theta0: f64,
    pub mu_q0: f64,
    pub norm: StepNorm,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    pub record_every: u64,
    pub update_every: u64,
    pub perturbation_scale: f64,
    pub output: Option<PathBuf>,
    /// SNR of the noisy fig2_grid regimes, in dB.
    pub noise_snr_db: f64,
    /// Restrict the fig2 grid to one Hessian scale when set.
    pub sigma_h_sq: Option<f64>,
    /// Restrict the fig2 grid to one definiteness class when set.
    pub hessian_definite: Option<bool>,
    pub rnn_length: usize,
    pub mnist: MnistConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistConfig {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Training-subset size; 0 keeps the full set.
    pub subset: usize,
    /// L2 regularization coefficient added to the training cost.
    pub lambda: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid configuration:\n{}", errors.join("\n"))]
pub struct ConfigError {
    pub errors: Vec<String>,
}

/// Parses the text into (key path, value) pairs. Lines are `key = value`;
/// `#` starts a comment; `[section]` prefixes following keys with
/// `section.`.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, Vec<String>> {
    let mut pairs = BTreeMap::new();
    let mut errors = Vec::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = format!("{}.", name.trim());
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = format!("{section}{}", key.trim());
                if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
                    errors.push(format!("line {}: duplicate key `{key}`", lineno + 1));
                }
            }
            None => errors.push(format!(
                "line {}: expected `key = value`, got `{line}`",
                lineno + 1
            )),
        }
    }
    if errors.is_empty() {
        Ok(pairs)
    } else {
        Err(errors)
    }
}

struct Reader {
    pairs: BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.pairs.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let raw = self.take(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("{key}: expected {what}, got `{raw}`"));
                None
            }
        }
    }
}

/// Validates raw config text, filling defaults. Every violated field is
/// reported; unknown keys are rejected.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let pairs = parse_pairs(text).map_err(|errors| ConfigError { errors })?;
    let mut r = Reader {
        pairs,
        errors: Vec::new(),
    };

    let experiment = match r.take("experiment") {
        None => {
            r.errors.push("experiment: required key is missing".into());
            None
        }
        Some(raw) => match Experiment::parse(&raw) {
            Some(e) => Some(e),
            None => {
                r.errors.push(format!(
                    "experiment: unknown experiment `{raw}` (expected fig2_grid, equalizer, zebra, rnn_addition, mnist_linear, mnist_mlp2, or mnist_mlp3_hinge)"
                ));
                None
            }
        },
    };

    let criterion = match r.take("criterion") {
        None => CriterionChoice::Criterion(Criterion::C3),
        Some(raw) => match CriterionChoice::parse(&raw) {
            Some(c) => c,
            None => {
                r.errors.push(format!(
                    "criterion: unknown criterion `{raw}` (expected c1, c2, c3, none, or ideal-oracle)"
                ));
                CriterionChoice::Criterion(Criterion::C3)
            }
        },
    };

    let layout = match r.take("layout") {
        None => experiment.map(default_layout).unwrap_or(LayoutChoice::Dense),
        Some(raw) => match LayoutChoice::parse(&raw) {
            Some(l) => l,
            None => {
                r.errors.push(format!(
                    "layout: unknown layout `{raw}` (expected dense, kron, or lm:<rank>)"
                ));
                LayoutChoice::Dense
            }
        },
    };

    let norm = match r.take("norm") {
        None => StepNorm::MaxAbs,
        Some(raw) => match raw.as_str() {
            "max_abs" => StepNorm::MaxAbs,
            "max_abs_diag" => StepNorm::MaxAbsDiag,
            _ => {
                r.errors.push(format!(
                    "norm: unknown normalization `{raw}` (expected max_abs or max_abs_diag)"
                ));
                StepNorm::MaxAbs
            }
        },
    };

    let mu_theta0 = r
        .parse::<f64>("mu_theta0", "a real number")
        .unwrap_or_else(|| {
            experiment
                .map(|e| default_mu_theta0(e, criterion))
                .unwrap_or(0.01)
        });
    let mu_q0 = r.parse::<f64>("mu_q0", "a real number").unwrap_or(0.01);
    let batch_size = r
        .parse::<usize>("batch_size", "a positive integer")
        .unwrap_or_else(|| match experiment {
            Some(Experiment::Equalizer) => 10,
            Some(Experiment::Fig2Grid) => 1,
            _ => 100,
        });
    let iterations = r
        .parse::<u64>("iterations", "a positive integer")
        .unwrap_or_else(|| experiment.map(default_iterations).unwrap_or(10_000));
    let seed = r.parse::<u64>("seed", "an unsigned integer").unwrap_or(0);
    let record_every = r
        .parse::<u64>("record_every", "a positive integer")
        .unwrap_or(match experiment {
            Some(Experiment::Fig2Grid) => 1,
            _ => 100,
        });
    let update_every = r
        .parse::<u64>("update_every", "a positive integer")
        .unwrap_or(1);
    let perturbation_scale = r
        .parse::<f64>("perturbation_scale", "a positive real number")
        .unwrap_or(DEFAULT_PERTURBATION_SCALE);
    let output = r.take("output").map(PathBuf::from);
    let noise_snr_db = r
        .parse::<f64>("noise_snr_db", "a real number")
        .unwrap_or(-20.0);
    let sigma_h_sq = r.parse::<f64>("sigma_h_sq", "a positive real number");
    let hessian_definite = match r.take("hessian") {
        None => None,
        Some(raw) => match raw.as_str() {
            "definite" => Some(true),
            "indefinite" => Some(false),
            _ => {
                r.errors.push(format!(
                    "hessian: expected definite or indefinite, got `{raw}`"
                ));
                None
            }
        },
    };
    let rnn_length = r
        .parse::<usize>("rnn.length", "a positive integer")
        .unwrap_or(100);
    let mnist = MnistConfig {
        images: r.take("mnist.images").map(PathBuf::from),
        labels: r.take("mnist.labels").map(PathBuf::from),
        test_images: r.take("mnist.test_images").map(PathBuf::from),
        test_labels: r.take("mnist.test_labels").map(PathBuf::from),
        subset: r
            .parse::<usize>("mnist.subset", "an unsigned integer")
            .unwrap_or(10_000),
        lambda: r.parse::<f64>("mnist.lambda", "a real number").unwrap_or(0.0),
    };

    for key in r.pairs.keys() {
        r.errors.push(format!("{key}: unknown key"));
    }
    let mut errors = r.errors;

    // Cross-field checks.
    if !(mu_theta0 > 0.0 && mu_theta0 <= 1.0) {
        errors.push(format!("mu_theta0: {mu_theta0} out of (0, 1]"));
    }
    if !(mu_q0 > 0.0 && mu_q0 <= 1.0) {
        errors.push(format!("mu_q0: {mu_q0} out of (0, 1]"));
    }
    if batch_size == 0 {
        errors.push("batch_size: must be at least 1".into());
    }
    if iterations == 0 {
        errors.push("iterations: must be at least 1".into());
    }
    if record_every == 0 {
        errors.push("record_every: must be at least 1".into());
    }
    if update_every == 0 {
        errors.push("update_every: must be at least 1".into());
    }
    if !(perturbation_scale > 0.0 && perturbation_scale.is_finite()) {
        errors.push(format!(
            "perturbation_scale: {perturbation_scale} must be positive and finite"
        ));
    }
    if rnn_length < 2 {
        errors.push("rnn.length: must be at least 2".into());
    }
    if let Some(s) = sigma_h_sq {
        if !(s > 0.0 && s.is_finite()) {
            errors.push(format!("sigma_h_sq: {s} must be positive and finite"));
        }
    }
    if mnist.lambda < 0.0 {
        errors.push(format!("mnist.lambda: {} must be >= 0", mnist.lambda));
    }
    if let Some(e) = experiment {
        if let CriterionChoice::Criterion(c) = criterion {
            if c != Criterion::C3 && layout != LayoutChoice::Dense {
                errors.push(format!(
                    "criterion: {} combined with layout {} is unsupported (criteria 1 and 2 need a dense layout)",
                    CriterionChoice::Criterion(c).name(),
                    layout.name()
                ));
            }
        }
        if criterion == CriterionChoice::IdealOracle && e != Experiment::Fig2Grid {
            errors.push(
                "criterion: ideal-oracle needs the known curvature of fig2_grid".into(),
            );
        }
        if layout == LayoutChoice::Kron
            && matches!(e, Experiment::Fig2Grid | Experiment::Equalizer)
        {
            errors.push(format!(
                "layout: kron requires a layered model, not {}",
                e.name()
            ));
        }
        if let LayoutChoice::LimitedMemory(rank) = layout {
            let dim = flat_dimension(e, rnn_length);
            if rank > dim {
                errors.push(format!(
                    "layout: lm rank {rank} exceeds the parameter dimension {dim}"
                ));
            }
        }
    }

    match (experiment, errors.is_empty()) {
        (Some(experiment), true) => Ok(ExperimentConfig {
            experiment,
            criterion,
            layout,
            mu_theta0,
            mu_q0,
            norm,
            batch_size,
            iterations,
            seed,
            record_every,
            update_every,
            perturbation_scale,
            output,
            noise_snr_db,
            sigma_h_sq,
            hessian_definite,
            rnn_length,
            mnist,
        }),
        _ => Err(ConfigError { errors }),
    }
}

fn flat_dimension(e: Experiment, rnn_length: usize) -> usize {
    let _ = rnn_length;
    match e {
        Experiment::Fig2Grid => 10,
        Experiment::Equalizer => 21,
        Experiment::Zebra => 401,
        Experiment::RnnAddition => 2701,
        Experiment::MnistLinear => 7850,
        Experiment::MnistMlp2 => 238_510,
        Experiment::MnistMlp3Hinge => 266_610,
    }
}

fn default_layout(e: Experiment) -> LayoutChoice {
    match e {
        Experiment::Fig2Grid | Experiment::Equalizer | Experiment::Zebra => LayoutChoice::Dense,
        _ => LayoutChoice::Kron,
    }
}

fn default_iterations(e: Experiment) -> u64 {
    match e {
        Experiment::Fig2Grid => 20_000,
        Experiment::Equalizer => 30_000,
        Experiment::Zebra => 20_000,
        Experiment::RnnAddition => 100_000,
        // Three epochs of the default 10k subset at batch size 100.
        Experiment::MnistLinear | Experiment::MnistMlp2 | Experiment::MnistMlp3Hinge => 300,
    }
}

/// Tuned per-experiment defaults for the normalized parameter step size.
fn default_mu_theta0(e: Experiment, criterion: CriterionChoice) -> f64 {
    let preconditioned = matches!(
        criterion,
        CriterionChoice::Criterion(_) | CriterionChoice::IdealOracle
    );
    match (e, preconditioned) {
        (Experiment::Fig2Grid, _) => 0.01,
        (Experiment::Equalizer, true) => 0.05,
        (Experiment::Equalizer, false) => 0.005,
        (Experiment::Zebra, true) => 0.05,
        (Experiment::Zebra, false) => 0.1,
        (Experiment::RnnAddition, true) => 0.05,
        (Experiment::RnnAddition, false) => 0.05,
        (_, true) => 0.01,
        (_, false) => 0.05,
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment = {}", self.experiment.name())?;
        writeln!(f, "criterion = {}", self.criterion.name())?;
        writeln!(f, "layout = {}", self.layout.name())?;
        writeln!(f, "mu_theta0 = {}", self.mu_theta0)?;
        writeln!(f, "mu_q0 = {}", self.mu_q0)?;
        let norm = match self.norm {
            StepNorm::MaxAbs => "max_abs",
            StepNorm::MaxAbsDiag => "max_abs_diag",
        };
        writeln!(f, "norm = {norm}")?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "iterations = {}", self.iterations)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "record_every = {}", self.record_every)?;
        writeln!(f, "update_every = {}", self.update_every)?;
        writeln!(f, "perturbation_scale = {:e}", self.perturbation_scale)?;
        if let Some(out) = &self.output {
            writeln!(f, "output = {}", out.display())?;
        }
        if self.experiment == Experiment::Fig2Grid {
            writeln!(f, "noise_snr_db = {}", self.noise_snr_db)?;
            if let Some(s) = self.sigma_h_sq {
                writeln!(f, "sigma_h_sq = {s:e}")?;
            }
            if let Some(d) = self.hessian_definite {
                writeln!(f, "hessian = {}", if d { "definite" } else { "indefinite" })?;
            }
        }
        if self.experiment == Experiment::RnnAddition {
            writeln!(f, "\n[rnn]")?;
            writeln!(f, "length = {}", self.rnn_length)?;
        }
        if self.experiment.is_mnist() {
            writeln!(f, "\n[mnist]")?;
            writeln!(f, "subset = {}", self.mnist.subset)?;
            writeln!(f, "lambda = {}", self.mnist.lambda)?;
            for (key, path) in [
                ("images", &self.mnist.images),
                ("labels", &self.mnist.labels),
                ("test_images", &self.mnist.test_images),
                ("test_labels", &self.mnist.test_labels),
            ] {
                if let Some(p) = path {
                    writeln!(f, "{key} = {}", p.display())?;
                }
            }
        }
        Ok(())
    }
}
