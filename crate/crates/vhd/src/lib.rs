//! File formats, run configuration and the command-line driver built on
//! [`vhd_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;

pub use error::{Result, VhdError};
