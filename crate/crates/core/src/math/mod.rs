//! Dense tensor arithmetic, tape-based gradients, Adam, and Gaussian utilities.

mod adam;
mod func;
mod gaussian;
mod param;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use func::{bernoulli_log_lik, forward_affine, log_sigmoid, sigmoid, softplus};
pub(crate) use func::affine_into;
pub use gaussian::{gaussian_kl, reparam_sample, DiagGaussian};
pub(crate) use gaussian::kl_parts;
pub use param::ParamTensor;
pub use tape::{Gradients, Tape, Var};

/// Lower bound added to every softplus-parameterized standard deviation.
pub const STD_FLOOR: f64 = 1e-4;
