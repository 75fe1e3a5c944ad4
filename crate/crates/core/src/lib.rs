//! Cross-spectral analysis of bivariate graph signals.
//!
//! Jointly stationary processes on graphs, estimators of their power and
//! cross spectral densities (periodogram, correlogram, least squares,
//! windowed averages, windowed graph Fourier transform), coherence,
//! Huber M-type estimators and Monte-Carlo checks of estimator moments.
//!
//! All node and eigenvector indices are zero-based; eigenpairs are sorted
//! by ascending eigenvalue.

pub mod density;
pub mod error;
pub mod estimators;
pub mod filters;
pub mod graph;
pub mod processes;
pub mod robust;
pub mod validation;

pub use density::{DensityKind, SpectralDensity};
pub use error::{Error, Result};
pub use filters::{builtin_kernel, BuiltinKernel, FilterKernel};
pub use graph::{eigendecompose, karate_club, laplacian, Graph, ShiftOperator, SpectralBasis};
pub use processes::SignalEnsemble;
