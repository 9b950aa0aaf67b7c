//! Learning event classifiers from imprecise, timestamp-only supervision.
//!
//! A session is a sequence of instances (feature vector `x_i` at time `t_i`)
//! plus a set of noisy event timestamps `z_l`. Each instance has a latent
//! label and emits zero or more events; events are matched to instances in
//! time order. [`learning::fit`] maximizes the marginal likelihood of the
//! observed timestamps, summing over labels, counts and assignments with a
//! forward/backward recursion in [`inference`].

// Index loops read closer to the recursions than iterator chains do, and
// `!(x > y)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod check;
pub mod classifier;
pub mod data;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod inference;
pub mod learning;
pub mod math;
pub mod model_io;
pub mod observation;
pub mod sweep;
pub mod synth;

pub use classifier::{ClassifierKind, ClassifierParams};
pub use data::{load_dataset, save_dataset, Dataset, Session};
pub use error::{Error, Result};
pub use inference::{PosteriorTables, Table};
pub use learning::{fit, objective_and_gradient, FitConfig, InitOptions, ModelParams};
pub use model_io::ModelFile;
pub use observation::{BetaPrior, CountParams, NoiseParams};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/data.md")]
    pub struct Data;
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/inference.md")]
    pub struct Inference;
    #[doc = include_str!("../../../book/src/learning.md")]
    pub struct Learning;
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub struct Baselines;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
    #[doc = include_str!("../../../book/src/checks.md")]
    pub struct Checks;
}
