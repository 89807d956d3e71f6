//! Dense numeric engine: matrices, layer primitives, parameters, SGD and a
//! finite-difference oracle.

mod gradcheck;
mod layers;
mod matrix;
mod param;
mod rng;

pub use gradcheck::{
    finite_diff_grad, finite_diff_input, max_relative_error, relative_error, REL_ERR_FLOOR,
};
pub use layers::{
    affine_backward, affine_forward, dropout, dropout_backward, glorot_bound, relu,
    relu_backward, AffineGrads, Linear, Mode,
};
pub use matrix::{dot, matmul, Matrix, Scalar};
pub use param::{sgd_step, sgd_step_set, Param, ParamSet};
pub use rng::{Rng, Stream};
