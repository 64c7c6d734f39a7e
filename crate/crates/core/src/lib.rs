//! Block floating point arithmetic and a progressive-precision multigrid
//! solver for B-spline finite element discretizations.

pub mod analysis;
pub mod bfp;
pub mod experiments;
pub mod ext;
pub mod fem;
pub mod multigrid;
pub mod blas;
pub mod sparse;
pub mod wideint;

pub use bfp::{BfpBlock, BfpScalar, Layout};
pub use blas::{BfpMatrix, ExactKernel};
pub use wideint::WideInt;
