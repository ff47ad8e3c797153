#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod kernels;
pub mod mkl;
pub mod numerics;
pub mod spc;
pub mod workbench;

pub use error::{Error, Result};
