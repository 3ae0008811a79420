//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The engine is a Wengert-list arena: a [`Tape`] owns every value produced
//! during a forward pass, operations append nodes and return [`Var`] handles,
//! and [`Tape::backward`] replays the list in reverse to accumulate gradients
//! into tracked leaves. Tensors outside a tape are plain values and never
//! accumulate gradient.
//!
//! The element type is generic over [`Real`] so the same operation set runs
//! at `f32` in production and at `f64` under the finite-difference oracle in
//! [`gradcheck`].

mod conv;
pub mod gradcheck;
mod matmul;
mod tape;
mod tensor;
#[cfg(test)]
mod tests;

pub use tape::{Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

/// Scalar element type of tensors. Implemented for `f32` and `f64`.
pub trait Real:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not describe {len} elements")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("log: non-positive input {value}")]
    LogDomain { value: f64 },
    #[error("softmax_rows: row {row} is fully masked")]
    FullyMaskedRow { row: usize },
    #[error("backward: loss must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("conv2d: kernel {kh}x{kw} larger than padded input {h}x{w}")]
    KernelTooLarge {
        kh: usize,
        kw: usize,
        h: usize,
        w: usize,
    },
    #[error("concat: no inputs")]
    EmptyConcat,
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    BadAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("mask length {mask} does not match tensor of {len} elements")]
    BadMask { mask: usize, len: usize },
}

pub type Result<V> = std::result::Result<V, AutodiffError>;
