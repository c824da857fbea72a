//! Capacity scaling of underwater acoustic networks: channel model, cut-set
//! upper bound, multi-hop achievability and the sweeps that compare them.

pub mod acceptance;
pub mod channel;
pub mod cli;
pub mod config;
pub mod cutset;
pub mod error;
pub mod linalg;
pub mod logval;
pub mod mh;
pub mod output;
pub mod rng;
pub mod scaling;
pub mod topology;

pub use error::{Error, Result};
pub use logval::LogValue;
