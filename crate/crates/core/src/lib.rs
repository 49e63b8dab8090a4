//! Model-based deep rule forests.
//!
//! Layers of randomly patched model-based trees re-encode the data as
//! leaf-membership features; final interpretable learners are fitted on any
//! layer and their rules can be expanded back to the raw inputs.

pub mod cli;
pub mod data;
pub mod error;
pub mod forest;
pub mod linmod;
pub mod mobtree;
pub mod rules;
pub mod seed;
pub mod stability;
pub mod stack;
mod textfmt;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/linear-models.md")]
    mod linear_models {}
    #[doc = include_str!("../../../book/src/stability.md")]
    mod stability {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/forests.md")]
    mod forests {}
    #[doc = include_str!("../../../book/src/rules.md")]
    mod rules {}
    #[doc = include_str!("../../../book/src/stack.md")]
    mod stack {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
