//! Small single-threaded reverse-mode autodiff engine with fused ops for the enhancement network.

pub mod conv;
pub(crate) mod gemm;
pub mod graph;
pub mod init;
pub(crate) mod kernels;
pub mod layers;
pub mod lstm;
pub mod norm;
pub mod ops;
pub mod optim;
pub mod param;
pub mod tensor;
#[cfg(test)]
pub(crate) mod testutil;

pub use conv::Conv2dSpec;
pub use graph::{Gradients, Graph, Var};
pub use param::{Param, ParamId, ParamKind, ParamStore, Session};
pub use tensor::Tensor;
