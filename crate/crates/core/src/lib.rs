//! Neural machine translation with an attention sentinel.
//!
//! A GRU encoder-decoder with additive attention, optionally extended by a
//! sentinel vector and a gate that lets the decoder draw on its own state
//! instead of the source. Everything runs on a small reverse-mode autodiff
//! tape in `f64`.

pub mod attention;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod search;

pub use error::{Error, Result};
