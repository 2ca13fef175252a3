//! Numerical engine for polariton branch dynamics in single- and two-site
//! Jaynes-Cummings(-Hubbard) systems.
//!
//! Units: every frequency, rate and energy is expressed in units of the
//! atom-field coupling `g`; times are in units of `1/g`.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hamiltonians;
pub mod lindblad;
pub mod linalg;
pub mod operator_core;
pub mod perturbation;
pub mod polariton_basis;
pub mod protocols;
pub mod selfcheck;
pub mod spectroscopy;

pub use error::{Error, Result};
pub use hamiltonians::SystemParams;
pub use num_complex::Complex64 as C64;
pub use operator_core::{DensityMatrix, HilbertDims, Ket, Operator};
pub use polariton_basis::{Branch, PolaritonLabel};
