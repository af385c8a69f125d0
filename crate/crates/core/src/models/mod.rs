//! Experiment models with hand-derived analytic gradients: the synthetic
//! quadratic, the constant-modulus equalizer, feedforward tanh networks, and
//! a vanilla RNN trained through time.

pub mod check;
mod equalizer;
mod mlp;
mod quadratic;
mod rnn;

pub use equalizer::{isi, isi_with_response, EqualizerModel, IsiError, UNIFORM_DISPERSION};
pub use mlp::{LossKind, MlpModel};
pub use quadratic::{make_hessian, secant_pair, QuadraticBatch, QuadraticModel};
pub use rnn::RnnModel;
