//! Information bottleneck analysis of chaotic double-pendulum dynamics.

pub mod analysis;
pub mod autodiff;
pub mod bottleneck;
pub mod checkpoint;
pub mod error;
pub mod pendulum;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
