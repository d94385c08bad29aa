//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration, flags, or API misuse.
    #[error("config: {0}")]
    Config(String),

    /// Dataset parsing / schema problems.
    #[error("data: {0}")]
    Data(String),

    /// Tensor shape mismatch.
    #[error("shape: {0}")]
    Shape(String),

    /// Quantizer / fixed-point encoding problems.
    #[error("quant: {0}")]
    Quant(String),

    /// IR validation diagnostics (first error wins).
    #[error("ir: instr {index}: {message}")]
    Ir { index: usize, message: String },

    /// Runtime fault while interpreting a program.
    #[error("interp: instr {index}: {message}")]
    Interp { index: usize, message: String },

    /// Model cannot be lowered (un-extractable table, width overflow, ...).
    #[error("lower: {0}")]
    Lower(String),

    /// Bit-exactness verification found a mismatch.
    #[error("verify: vector {vector}, output {port}: program {got:#x} != model {expected:#x}")]
    Verify { vector: usize, port: usize, got: u64, expected: u64 },

    /// Malformed serialized file (manifest, program, tensor).
    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 0 ok, 1 verify mismatch, 2 usage, 3 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verify { .. } => 1,
            Error::Data(_) | Error::Format(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Ir { .. } | Error::Interp { .. } => 3,
            _ => 2,
        }
    }
}
