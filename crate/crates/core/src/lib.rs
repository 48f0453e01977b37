//! Exponential Runge–Kutta integrators for parabolic problems with
//! time-dependent boundary data, including boundary corrections that
//! restore the classical order.
//!
//! A guide with worked examples lives in `book/`.

pub mod boundary;
pub mod config;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod methods;
pub mod phi;
pub mod problems;
pub mod spatial;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/phi-functions.md")]
    mod phi_functions {}
    #[doc = include_str!("../../../book/src/space-discretization.md")]
    mod space_discretization {}
    #[doc = include_str!("../../../book/src/methods.md")]
    mod methods {}
    #[doc = include_str!("../../../book/src/boundary-corrections.md")]
    mod boundary_corrections {}
    #[doc = include_str!("../../../book/src/integration.md")]
    mod integration {}
    #[doc = include_str!("../../../book/src/convergence-studies.md")]
    mod convergence_studies {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
    #[doc = include_str!("../../../book/src/reproduction.md")]
    mod reproduction {}
}
