//! Krein-space spectral toolbox: quadratic pencils and their linearizations,
//! indefinite functional calculus, group-integral weights, positive-commutator
//! estimates, and weighted resolvent sweeps — all at dense-matrix scale.
//!
//! See the guide under `book/` for a walk-through; its code blocks are run by
//! `cargo test --doc` through the `guide` module below.

pub mod error;
pub mod groupweights;
pub mod harness;
pub mod kgoperators;
pub mod kreinspace;
pub mod mourrelap;
pub mod numkernel;
pub mod quad;
pub mod speccalc;

pub use error::{Error, Result};

/// The book chapters double as doc-tests so the guide stays in sync with the
/// code. Only compiled when collecting doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/pencils.md")]
    pub struct Pencils;
    #[doc = include_str!("../../../book/src/calculus.md")]
    pub struct Calculus;
    #[doc = include_str!("../../../book/src/commutators.md")]
    pub struct Commutators;
    #[doc = include_str!("../../../book/src/sweeps.md")]
    pub struct Sweeps;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
