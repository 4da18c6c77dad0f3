//! Finite-element eigenvalue convergence-rate laboratory.

// `!(x <= tol)` is deliberate: it rejects NaN. Index loops mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod error;
pub mod fem;
pub mod field;
pub mod geometry;
pub mod gevp;
pub mod linalg;
pub mod mesh;
pub mod polyspace;
pub mod quadrature;
pub mod rates;
pub mod spectra;
pub mod studio;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use polyspace::{LocalPolynomial, LocalSpace, MultiIndex, MultiIndexSet};
pub use fem::{Family, FeSpace, SymmetricPair};
pub use gevp::{EigenPair, Method};
pub use mesh::Mesh;
pub use rates::RateFit;
pub use spectra::ExactEigenpair;
pub use studio::{StudyConfig, StudyReport};
