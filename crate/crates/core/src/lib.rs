
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod calib;
pub mod error;
pub mod gof;
pub mod marketdata;
pub mod par;
pub mod preavg;
pub mod redf;
pub mod rng;
pub mod sim;
pub mod spotvol;
pub mod special;

pub use error::{Error, Result};
