//! Dense matrices, seeded random streams and a finite-difference oracle.

mod gradcheck;
mod mat;
mod rng;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use mat::{axpy, dot, norm, sigmoid, tanh, ElementwiseKind, Mat};
pub use rng::{rng_derive, Label, Rng};
