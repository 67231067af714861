//! Numerical toolkit for scalable Lévy operators: Lévy measures and their
//! symbols, transition densities, parabolic and elliptic solvers (spectral
//! and Feynman–Kac Monte Carlo), assumption verifiers, estimate checks, and
//! the anisotropic Calderón–Zygmund machinery on space-time grids.

// `!(x > 0.0)` is the NaN-rejecting guard throughout.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::type_complexity,
    clippy::needless_range_loop,
    clippy::large_enum_variant
)]

pub mod bernstein;
pub mod cz;
pub mod density;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod measure;
pub mod operators;
pub mod quad;
pub mod report;
pub mod scaling;
pub mod simulate;
pub mod solve;
pub mod symbol;

pub use error::{Error, Result};
