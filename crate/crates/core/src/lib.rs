//! Nonparametric Bayesian group factor analysis fitted by collapsed
//! variational inference.
//!
//! Start with [`engine::fit`] on a [`model::GroupedDataset`]; the guide in
//! `book/` walks through the model, the updates and the evaluation tools.

pub mod approx;
pub mod engine;
pub mod experiment;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod simdata;

mod serde_matrix;

pub use error::{NgfaError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/approximations.md")]
    mod approximations {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
