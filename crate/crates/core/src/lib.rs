//! Greedy forward-backward selection of feature groups for least-squares
//! and logistic models, with cross-validation, group lasso and FoBa
//! baselines, simulation designs and numerical diagnostics.
//!
//! The guide under `book/` walks through each piece; its code blocks are
//! compiled as doctests of this crate.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod criterion;
pub mod error;
pub mod groups;
pub mod iga;
pub mod linalg;
pub mod metrics;
pub mod modelselect;
pub mod simgen;
pub mod verify;

pub use criterion::{Dataset, Family, Objective};
pub use error::{Error, Result};
pub use groups::{GroupPartition, GroupSet};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/objectives.md")]
    mod objectives {}
    #[doc = include_str!("../../../book/src/path.md")]
    mod path {}
    #[doc = include_str!("../../../book/src/cv.md")]
    mod cv {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/session.md")]
    mod session {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
