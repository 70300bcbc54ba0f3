use alloc::string::String;
use core::fmt;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the denoising engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A shape with a zero-sized dimension was requested.
    ZeroDim,
    ShapeMismatch {
        context: &'static str,
        expected: Shape,
        got: Shape,
    },
    /// Data buffer length does not agree with the shape.
    DataLength {
        expected: usize,
        got: usize,
    },
    ChannelMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    InvalidGroups {
        groups: usize,
        c_in: usize,
        c_out: usize,
    },
    InvalidParam(String),
    Unsupported(String),
    /// A NaN or infinity was produced.
    NonFinite(String),
    /// Spatial dimensions are not a multiple of the model's downsampling factor.
    IncompatibleSize {
        h: usize,
        w: usize,
        multiple: usize,
    },
    UnresolvedParam(String),
    Graph(String),
    Weights(WeightError),
    EmptyDataset,
    Diverged {
        iter: usize,
        detail: String,
    },
    AllFramesRejected,
    SingularMatrix,
}

/// Failures when decoding a MAID weight file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightError {
    BadMagic([u8; 4]),
    UnsupportedVersion(u32),
    Truncated { offset: usize },
    DimOverflow { name: String },
    UnsupportedDtype(u8),
    BadName { offset: usize },
    TrailingBytes(usize),
}

impl fmt::Display for WeightError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightError::BadMagic(m) => write!(f, "bad magic {m:02x?}, expected \"MAID\""),
            WeightError::UnsupportedVersion(v) => write!(f, "unsupported version {v}"),
            WeightError::Truncated { offset } => write!(f, "file truncated at byte {offset}"),
            WeightError::DimOverflow { name } => {
                write!(
                    f,
                    "dimensions of parameter '{name}' overflow or exceed the file"
                )
            }
            WeightError::UnsupportedDtype(d) => write!(f, "unsupported dtype tag {d}"),
            WeightError::BadName { offset } => {
                write!(f, "parameter name at byte {offset} is not UTF-8")
            }
            WeightError::TrailingBytes(n) => write!(f, "{n} trailing bytes after last parameter"),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroDim => f.write_str("tensor dimensions must all be at least 1"),
            Error::ShapeMismatch {
                context,
                expected,
                got,
            } => write!(
                f,
                "{context}: shape mismatch, expected {expected}, got {got}"
            ),
            Error::DataLength { expected, got } => {
                write!(
                    f,
                    "data length {got} does not match shape volume {expected}"
                )
            }
            Error::ChannelMismatch {
                context,
                expected,
                got,
            } => write!(f, "{context}: expected {expected} channels, got {got}"),
            Error::InvalidGroups {
                groups,
                c_in,
                c_out,
            } => write!(
                f,
                "groups={groups} must divide both c_in={c_in} and c_out={c_out}"
            ),
            Error::InvalidParam(s) => write!(f, "invalid parameter: {s}"),
            Error::Unsupported(s) => write!(f, "unsupported: {s}"),
            Error::NonFinite(s) => write!(f, "non-finite value produced in {s}"),
            Error::IncompatibleSize { h, w, multiple } => {
                let pad_h = (multiple - h % multiple) % multiple;
                let pad_w = (multiple - w % multiple) % multiple;
                write!(
                    f,
                    "input {w}x{h} is not a multiple of {multiple}; pad by {pad_w} columns and {pad_h} rows"
                )
            }
            Error::UnresolvedParam(p) => write!(f, "unresolved parameter '{p}'"),
            Error::Graph(s) => write!(f, "graph error: {s}"),
            Error::Weights(e) => write!(f, "weight file: {e}"),
            Error::EmptyDataset => f.write_str("dataset is empty"),
            Error::Diverged { iter, detail } => {
                write!(f, "training diverged at iteration {iter}: {detail}")
            }
            Error::AllFramesRejected => f.write_str("every burst frame was rejected"),
            Error::SingularMatrix => f.write_str("color matrix is singular"),
        }
    }
}

impl core::error::Error for Error {}
impl core::error::Error for WeightError {}

impl From<WeightError> for Error {
    fn from(e: WeightError) -> Self {
        Error::Weights(e)
    }
}
