//! Indoor line-of-sight massive MIMO simulator.
//!
//! Compares co-located (ceiling candelabrum) and wall-distributed strip
//! deployments of microstrip patch elements by the downlink power that
//! zero-forcing precoding needs, and by the rates it delivers when the
//! channel is estimated from uplink pilots.
//!
//! With the default `parallel` feature, drop-level work runs on rayon; every
//! result is bit-identical to the sequential path.

pub mod antenna;
pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod montecarlo;
pub mod output;
pub mod par;
pub mod precoding;
pub mod quadrature;
pub mod rng;
pub mod units;

pub use error::{Error, Result};
