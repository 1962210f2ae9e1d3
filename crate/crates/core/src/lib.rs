//! Set-based video highlight scoring and dual-learner cross-category transfer.
//!
//! Everything in this crate is pure computation over in-memory data: a small
//! reverse-mode autodiff engine ([`tape`]), the set encoder and scoring heads
//! ([`model`]), the KL-based set objectives ([`loss`]), set samplers and a
//! synthetic corpus generator ([`data`], [`synth`]), the optimizer and both
//! training loops ([`optim`], [`train`]), and inference plus ranking metrics
//! ([`eval`]). File formats and the command-line driver live in the `vhd`
//! crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Real, Tensor};
