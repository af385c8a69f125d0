//! The preconditioned SGD optimizer.
//!
//! One iteration evaluates the mini-batch gradient, forms a perturbation
//! pair from a second gradient evaluation on the same batch, refreshes the
//! preconditioner factors with one relative-gradient step, and then moves
//! the parameters along the preconditioned gradient using the freshly
//! updated factors. Both step sizes are normalized, so values in (0, 1)
//! work across problems without manual scaling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::precond::{Criterion, LayoutError, PerturbationPair, PreconditionerLayout, StepNorm};

/// Default perturbation variance: the double-precision machine epsilon.
pub const DEFAULT_PERTURBATION_SCALE: f64 = 2.2204460492503131e-16; // 2^-52

/// Deterministic mini-batch gradient oracle.
///
/// Two calls with the same parameters and the same batch must return
/// bitwise-identical values; any stochasticity lives in the batch itself.
pub trait GradientSource {
    type Batch;

    fn dim(&self) -> usize;

    /// Mini-batch loss and its exact gradient at `theta`.
    fn loss_and_gradient(&self, theta: &[f64], batch: &Self::Batch) -> (f64, Vec<f64>);
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsgdError {
    #[error("non-finite gradient or loss at iteration {iteration}")]
    NumericFault { iteration: u64 },
    #[error("invalid optimizer configuration: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Optimizer hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    /// Estimation criterion; `None` disables preconditioner estimation
    /// entirely and recovers plain SGD bit for bit.
    pub criterion: Option<Criterion>,
    pub norm: StepNorm,
    /// Normalized parameter step size in (0, 1).
    pub mu_theta0: f64,
    /// Normalized factor step size in (0, 1).
    pub mu_q0: f64,
    /// Variance of each component of the parameter perturbation.
    pub perturbation_scale: f64,
    /// Refresh the preconditioner every this many iterations.
    pub update_every: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            criterion: Some(Criterion::C3),
            norm: StepNorm::MaxAbs,
            mu_theta0: 0.01,
            mu_q0: 0.01,
            perturbation_scale: DEFAULT_PERTURBATION_SCALE,
            update_every: 1,
        }
    }
}

impl OptimizerSettings {
    fn validate(&self, layout: &PreconditionerLayout) -> Result<(), PsgdError> {
        if !(self.mu_theta0 > 0.0 && self.mu_theta0 < 1.0) {
            return Err(PsgdError::InvalidSettings(format!(
                "mu_theta0 = {} out of (0, 1)",
                self.mu_theta0
            )));
        }
        if !(self.mu_q0 > 0.0 && self.mu_q0 < 1.0) {
            return Err(PsgdError::InvalidSettings(format!(
                "mu_q0 = {} out of (0, 1)",
                self.mu_q0
            )));
        }
        if !(self.perturbation_scale > 0.0 && self.perturbation_scale.is_finite()) {
            return Err(PsgdError::InvalidSettings(
                "perturbation_scale must be positive and finite".into(),
            ));
        }
        if self.update_every == 0 {
            return Err(PsgdError::InvalidSettings(
                "update_every must be at least 1".into(),
            ));
        }
        if let Some(c) = self.criterion {
            if c != Criterion::C3 && !layout.is_all_dense() {
                return Err(PsgdError::InvalidSettings(format!(
                    "criterion {c:?} requires an all-dense layout"
                )));
            }
        }
        Ok(())
    }
}

/// Serializable random-stream position for exact resumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

/// Complete optimizer state: parameters, preconditioner layout, step sizes,
/// random stream, and iteration counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    theta: Vec<f64>,
    layout: PreconditionerLayout,
    settings: OptimizerSettings,
    iteration: u64,
    rng: ChaCha8Rng,
}

impl OptimizerState {
    pub fn new(
        theta: Vec<f64>,
        layout: PreconditionerLayout,
        settings: OptimizerSettings,
        rng: ChaCha8Rng,
    ) -> Result<Self, PsgdError> {
        settings.validate(&layout)?;
        if theta.len() != layout.dim() {
            return Err(PsgdError::InvalidSettings(format!(
                "layout covers {} parameters but theta has {}",
                layout.dim(),
                theta.len()
            )));
        }
        Ok(OptimizerState {
            theta,
            layout,
            settings,
            iteration: 0,
            rng,
        })
    }

    pub fn with_seed(
        theta: Vec<f64>,
        layout: PreconditionerLayout,
        settings: OptimizerSettings,
        seed: u64,
    ) -> Result<Self, PsgdError> {
        Self::new(theta, layout, settings, ChaCha8Rng::seed_from_u64(seed))
    }

    /// Rebuilds a state from checkpointed parts.
    pub fn from_parts(
        theta: Vec<f64>,
        layout: PreconditionerLayout,
        settings: OptimizerSettings,
        iteration: u64,
        rng_state: RngState,
    ) -> Result<Self, PsgdError> {
        let mut state = Self::new(theta, layout, settings, ChaCha8Rng::from_seed(rng_state.seed))?;
        state.rng.set_stream(rng_state.stream);
        state.rng.set_word_pos(rng_state.word_pos);
        state.iteration = iteration;
        Ok(state)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn layout(&self) -> &PreconditionerLayout {
        &self.layout
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn rng_state(&self) -> RngState {
        RngState {
            seed: self.rng.get_seed(),
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos(),
        }
    }

    /// Draws a parameter perturbation with i.i.d. N(0, perturbation_scale)
    /// components, advancing the random stream deterministically.
    pub fn sample_perturbation(&mut self) -> Vec<f64> {
        let std = self.settings.perturbation_scale.sqrt();
        (0..self.theta.len())
            .map(|_| {
                let z: f64 = self.rng.sample(StandardNormal);
                std * z
            })
            .collect()
    }

    /// One complete iteration. Returns the mini-batch loss at the incoming
    /// parameters.
    ///
    /// The preconditioner refresh evaluates the gradient a second time at
    /// `theta + dtheta` on the same batch, so the perturbation pair honors
    /// the stochastic secant relation. The parameter move uses the factors
    /// as updated in this very iteration.
    pub fn step<S: GradientSource>(
        &mut self,
        source: &S,
        batch: &S::Batch,
    ) -> Result<f64, PsgdError> {
        let fault = PsgdError::NumericFault {
            iteration: self.iteration,
        };
        let (loss, g) = source.loss_and_gradient(&self.theta, batch);
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(fault);
        }

        match self.settings.criterion {
            Some(criterion) => {
                if self.iteration % self.settings.update_every == 0 {
                    let dtheta = self.sample_perturbation();
                    let perturbed: Vec<f64> = self
                        .theta
                        .iter()
                        .zip(&dtheta)
                        .map(|(t, d)| t + d)
                        .collect();
                    let (_, g2) = source.loss_and_gradient(&perturbed, batch);
                    if g2.iter().any(|v| !v.is_finite()) {
                        return Err(fault);
                    }
                    let dg: Vec<f64> = g2.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let pair = PerturbationPair::new(dtheta, dg);
                    self.layout
                        .update(criterion, &pair, self.settings.mu_q0, self.settings.norm)?;
                }
                let preconditioned = self.layout.apply(&g)?;
                for (t, d) in self.theta.iter_mut().zip(&preconditioned) {
                    *t -= self.settings.mu_theta0 * d;
                }
            }
            // Plain SGD: the identity preconditioner is never estimated, so
            // skip the apply as well; theta - mu * g is bitwise identical.
            None => {
                for (t, d) in self.theta.iter_mut().zip(&g) {
                    *t -= self.settings.mu_theta0 * d;
                }
            }
        }
        self.iteration += 1;
        Ok(loss)
    }
}

/// Adds lambda * |theta|^2 to a source's training cost. A zero coefficient
/// reproduces the wrapped source bit for bit.
pub struct L2Regularized<S> {
    inner: S,
    lambda: f64,
}

impl<S: GradientSource> L2Regularized<S> {
    pub fn new(inner: S, lambda: f64) -> Self {
        assert!(lambda >= 0.0);
        L2Regularized { inner, lambda }
    }
}

impl<S: GradientSource> GradientSource for L2Regularized<S> {
    type Batch = S::Batch;

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn loss_and_gradient(&self, theta: &[f64], batch: &S::Batch) -> (f64, Vec<f64>) {
        let (mut loss, mut g) = self.inner.loss_and_gradient(theta, batch);
        if self.lambda != 0.0 {
            for (gv, t) in g.iter_mut().zip(theta) {
                loss += self.lambda * t * t;
                *gv += 2.0 * self.lambda * t;
            }
        }
        (loss, g)
    }
}

/// Runs `iterations` steps, pulling one batch per step and reporting
/// (iteration, loss, state) to the observer after each one. Recording
/// cadence and windowed averaging are the observer's business.
pub fn run<S, I, F>(
    state: &mut OptimizerState,
    source: &S,
    batches: I,
    iterations: u64,
    mut observe: F,
) -> Result<(), PsgdError>
where
    S: GradientSource,
    I: IntoIterator<Item = S::Batch>,
    F: FnMut(u64, f64, &OptimizerState),
{
    let mut stream = batches.into_iter();
    for _ in 0..iterations {
        let batch = stream.next().expect("batch stream exhausted before the requested iteration count");
        let loss = state.step(source, &batch)?;
        observe(state.iteration, loss, state);
    }
    Ok(())
}
