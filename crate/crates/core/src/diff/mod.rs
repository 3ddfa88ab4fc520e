//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every primitive application in creation order, which
//! is a valid topological order by construction. [`Graph::backward`] walks it
//! once in reverse and hands back a [`Gradients`] map covering every trainable
//! leaf. [`gradcheck`] compares those gradients against central finite
//! differences.

pub mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{
    grad_check, grad_check_primitive, grad_check_with, relative_error, Coordinate, GradCheckConfig,
    GradCheckReport,
};
pub use graph::{Gradients, Graph, GraphOptions, Primitive, Segment, Var};
pub use tensor::Tensor;


#[allow(unused_imports)]
pub(crate) use tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc};
