//! Perturbative algebraic quantum field theory on discretized spacetimes.
//!
//! Fields live on a time grid (quantum mechanics) or on a time grid times a
//! truncated set of Fourier modes (the cylinder). Observables are polynomial
//! functionals stored as sums of contraction networks, and the quantum
//! products are exponentials of bidifferential operators acting on them.
//!
//! Module overview:
//! - [`model`]: grids, propagators, Lagrangians, Green functions.
//! - [`functional`]: polynomial functionals and formal power series.
//! - [`algebra`]: star products, time-ordered products, brackets.
//! - [`weyl`]: the Weyl algebra with exact phases and quasi-free states.
//! - [`graphs`]: Feynman graph enumeration and classification.
//! - [`renorm`]: scaling degrees and extension of distributions.
//! - [`microlocal`]: wave front set scans and bicharacteristic flow.
//! - [`smatrix`]: formal S-matrices, Bogoliubov maps, renormalization maps.

pub mod algebra;
pub mod error;
pub mod functional;
pub mod graphs;
pub mod microlocal;
pub mod model;
pub mod renorm;
pub mod sampling;
pub mod smatrix;
pub mod suites;
pub mod weyl;

pub use error::{Error, Result};
pub use functional::series::{Coefficient, FormalSeries};
pub use functional::PolyFunctional;
pub use model::{build_model, Geometry, Grid, Model, ModelSpec, PropagatorSet};
pub use num_complex::Complex64 as C64;

/// Complex imaginary unit.
pub const I: C64 = C64 { re: 0.0, im: 1.0 };
