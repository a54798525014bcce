//! Dependency-light complex linear algebra, special functions, and
//! reproducible random streams shared by every other module.

pub mod eig;
pub mod matrix;
pub mod rng;
pub mod special;

pub use eig::{hermitian_eig, hermitian_sqrt, least_squares_solve, HermitianSqrt, NumericsError};
pub use matrix::{inner, kronecker, norm_sqr, ComplexMatrix};
pub use rng::{complex_gaussian, mix_stream, RngStream};
pub use special::{bessel_j0, erfc, q_function};
