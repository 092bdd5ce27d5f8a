//! Deterministic differentiable-array core: tensors, scan primitives, a
//! reverse-mode tape, seeded randomness and the finite-difference oracle.

pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use gradcheck::{check_gradient, finite_difference_gradient, GradientMismatch};
pub use graph::{CustomOp, Graph, Var};
pub use ops::{
    clamped_divide, cumulative_product, cumulative_sum, logistic, masked_softmax, reversed_cumulative_sum,
    DIVIDE_EPS,
};
pub use rng::{gaussian_noise, SeededRng};
pub use tensor::Tensor;
