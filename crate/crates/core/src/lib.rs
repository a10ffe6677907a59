//! Multistep road-link speed forecasting with a K-hop masked graph
//! convolution feeding a GRU encoder-decoder with attention.
//!
//! The crate covers the whole pipeline: road graphs and hop masks
//! ([`graph`]), speed series on a fixed 5-minute grid ([`data`]),
//! calendar and historical-statistics features ([`features`]), the network
//! itself ([`model`]), mini-batch training ([`train`]) and evaluation against
//! baselines ([`eval`]). Gradients come from the small reverse-mode engine in
//! [`numcore`].

pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod model;
pub mod numcore;
mod par;
pub mod train;

pub use error::{Error, Result};
