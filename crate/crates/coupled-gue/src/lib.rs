//! Joint largest-eigenvalue probabilities for a pair of coupled GUE matrices
//! (two time points of the Gaussian Dyson process), computed as Fredholm
//! determinants of the extended Hermite kernel, together with numerical
//! residual checks of the identities and PDEs satisfied by those probabilities.

pub mod error;
pub mod fredholm;
pub mod hermite;
pub mod kernel;
pub mod mc;
pub mod observables;
pub mod quadrature;
pub mod residuals;
pub mod report;

pub use error::{Error, Result};
pub use fredholm::{EndpointData, FredholmSolution, OneMatrixSolution};
pub use kernel::KernelParams;
