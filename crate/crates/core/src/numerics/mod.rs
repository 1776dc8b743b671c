//! Dense 64-bit numerics: parameter storage, Adam, kernels and gradient checks.

mod adam;
pub mod checkpoint;
mod gradcheck;
pub mod linalg;
pub mod ops;
mod params;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Metadata};
pub use gradcheck::{
    check_gradients, relative_error, CoordinateCheck, GradCheckOptions, GradCheckReport, FD_STEP,
};
pub use linalg::Matrix;
pub use ops::{layer_norm, log_softmax, softmax};
pub use params::{Grads, Init, ParamId, ParamMeta, ParamStore, Values};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("parameter `{0}` registered twice")]
    DuplicateParam(String),
    #[error("parameter `{name}`: expected {expected} values, got {got}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("non-finite gradient in `{param}` at index {index}")]
    NonFiniteGradient { param: String, index: usize },
    #[error(
        "gradient check failed for `{}`[{}]: analytic {} vs numeric {} (relative error {:.3e})",
        .0.param, .0.index, .0.analytic, .0.numeric, .0.rel_error
    )]
    GradientCheckFailed(Box<CoordinateCheck>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
