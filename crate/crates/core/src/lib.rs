//! Simulation of memristive nanowire networks used as dynamic reservoirs.

pub mod circuit;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod readout;
pub mod reservoir;
pub mod rng;
pub mod signals;
pub mod topology;

pub use error::{Error, Result};
