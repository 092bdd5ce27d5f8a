//! Monotonic, MoChA and MILk attention for simultaneous transduction, with
//! latency metrics, a differentiable latency loss, a small recurrent
//! encoder-decoder and an experiment harness.

pub mod error;
pub mod harness;
pub mod latency;
pub mod attention;
pub mod data;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
