//! Dense numeric kernels: matrices, 1-D convolution, k-max pooling,
//! activations and a stable log-sum-exp, each with an exact backward pass.

mod matrix;
pub mod ops;

pub use matrix::{Matrix, ParamTensor};
pub use ops::{conv1d, kmax_pool, logsumexp, matvec, pad_to_width, softmax};
