// `!(x > 0.0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod problems;
pub mod proxqp;
pub mod solver;

pub use error::{Error, Result};
