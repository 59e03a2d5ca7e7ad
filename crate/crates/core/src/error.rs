//! Crate-wide error type. Every fallible operation reports the shapes or
//! names involved so callers can diagnose failures without a debugger.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Elementwise or structural shape disagreement between two operands.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An operand did not have the shape an operation requires.
    InvalidShape {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    /// Data length disagrees with the product of the dimensions.
    LengthMismatch { expected: usize, got: usize },
    /// Elementwise division hit an exact zero denominator.
    DivisionByZero { op: &'static str },
    /// Backward was started from a tensor that is not a scalar.
    NonScalarLoss { shape: Vec<usize> },
    /// Channel/group arithmetic for a grouped convolution does not work out.
    BadGroups {
        in_channels: usize,
        out_channels: usize,
        groups: usize,
    },
    /// Same-padding convolution requires odd kernel extents.
    EvenKernel { kh: usize, kw: usize },
    /// Instance statistics need at least two spatial positions.
    DegenerateSpatial { h: usize, w: usize },
    /// A strictly positive quantity was not strictly positive.
    NonPositive { what: &'static str, value: f64 },
    /// Scan-order request outside the four defined paths.
    BadScanPath { path: usize },
    /// A sequence operation got a length that does not match the grid.
    BadSequenceLength { expected: usize, got: usize },
    /// Discrete SSM parameters vary across tokens where a time-invariant
    /// system is required.
    TimeVarying { which: &'static str },
    /// Optimizer state and parameter list disagree.
    OptimizerMismatch { index: usize, detail: String },
    /// Checkpoint bytes failed structural validation.
    Checkpoint { detail: String },
    /// A named weight was missing or had the wrong shape on load.
    BadWeight { name: String, detail: String },
    /// Model configuration failed validation.
    Config { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shapes {lhs:?} and {rhs:?} are not compatible")
            }
            Error::InvalidShape { op, expected, got } => {
                write!(f, "{op}: expected {expected}, got shape {got:?}")
            }
            Error::LengthMismatch { expected, got } => {
                write!(
                    f,
                    "data length {got} does not match shape volume {expected}"
                )
            }
            Error::DivisionByZero { op } => {
                write!(f, "{op}: division by exact zero")
            }
            Error::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar, got shape {shape:?}")
            }
            Error::BadGroups {
                in_channels,
                out_channels,
                groups,
            } => write!(
                f,
                "conv2d: groups {groups} does not divide in={in_channels} out={out_channels}"
            ),
            Error::EvenKernel { kh, kw } => {
                write!(f, "conv2d: same padding requires odd kernel, got {kh}x{kw}")
            }
            Error::DegenerateSpatial { h, w } => {
                write!(f, "instance statistics need H*W >= 2, got {h}x{w}")
            }
            Error::NonPositive { what, value } => {
                write!(f, "{what} must be strictly positive, got {value}")
            }
            Error::BadScanPath { path } => {
                write!(f, "scan path index must be 0..4, got {path}")
            }
            Error::BadSequenceLength { expected, got } => {
                write!(
                    f,
                    "sequence length {got} does not match grid size {expected}"
                )
            }
            Error::TimeVarying { which } => {
                write!(f, "convolutional form requires time-invariant {which}")
            }
            Error::OptimizerMismatch { index, detail } => {
                write!(f, "optimizer state mismatch at parameter {index}: {detail}")
            }
            Error::Checkpoint { detail } => write!(f, "checkpoint: {detail}"),
            Error::BadWeight { name, detail } => write!(f, "weight '{name}': {detail}"),
            Error::Config { detail } => write!(f, "config: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
