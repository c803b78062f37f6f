#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod analysis;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod detector;
pub mod error;
pub mod matrix;
pub mod ris;
pub mod rng;
pub mod scenario;
pub mod specfun;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
