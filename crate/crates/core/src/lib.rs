//! Heat kernels and Riesz-transform kernels on the solvable extension
//! G = N x R of a stratified group N, with quadrature-based checks of their
//! size, decay and cancellation properties.

pub mod ad;
pub mod error;
pub mod estimator;
pub mod heat_kernel;
pub mod na_group;
pub mod quadrature;
pub mod riesz;
pub mod stratified_group;
pub mod subordination;

pub use error::{Error, Result};
