//! Quasi-stationary distributions of one-dimensional killed diffusions.
//!
//! A model is written in its original coordinates, normalized to unit
//! diffusion coefficient, and then analysed: the bottom of the spectrum and
//! its eigenfunction, Monte Carlo estimates of survival and conditioned
//! laws, and a verdict on whether the process admits a quasi-stationary
//! distribution and how fast convergence happens.

pub mod eigen;
pub mod expr;
pub mod io;
pub mod lebras;
pub mod mc;
pub mod model;
pub mod numeric;
pub mod verdict;

/// The guide's code blocks, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/eigen.md")]
    mod eigen {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/verdict.md")]
    mod verdict {}
    #[doc = include_str!("../../../book/src/lebras.md")]
    mod lebras {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
