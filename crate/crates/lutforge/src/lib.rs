//! `lutforge` trains small LUT-based neural networks on CPU and compiles them
//! into bit-exactly verifiable hardware.
//!
//! The pipeline has three halves that share one model description:
//!
//! * **Training** — [`layers`] provides LUT-Dense / LUT-Conv layers in which
//!   every input→output edge is a learned 1-input lookup table realized as a
//!   tiny MLP, with element-wise trainable fixed-point quantizers ([`fxp`])
//!   on every table boundary. [`train`] runs the Adam loop with a resource
//!   regularizer ([`estimate`]) and collects a Pareto set of checkpoints.
//! * **Compilation** — [`extract`] enumerates every trained table,
//!   [`lower`] turns the model into a linear instruction stream ([`ir`])
//!   whose interpreter is the ground-truth executable semantics.
//! * **Emission** — [`rtl`] prints synthesizable Verilog plus a
//!   self-checking testbench driven by interpreter-generated vectors.
//!
//! See the crate examples for one runnable program per capability, or the
//! `lutforge` binary for the command-line surface.

pub mod error;
pub mod estimate;
pub mod extract;
pub mod fxp;
pub mod io;
pub mod ir;
pub mod layers;
pub mod lower;
pub mod rtl;
pub mod train;

pub use error::{Error, Result};
