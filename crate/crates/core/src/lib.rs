//! Gridded wet-bulb temperature analysis of snowfall regimes.
//!
//! The crate covers the whole chain from near-surface air state to trend
//! inference: psychrometric wet-bulb temperature ([`thermo`]), inverse-variance
//! fusion of several products ([`ensemble`]), potential-snowfall masks, areas
//! and transition latitudes ([`snowmask`]), snowfall-to-precipitation ratio
//! ([`spr`]), Theil-Sen / Mann-Kendall trends with moving-block-bootstrap
//! significance ([`trend`]) and verification scores ([`metrics`]).

pub mod calendar;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod thermo;
pub mod stats;
pub mod gauge;
pub mod ensemble;
pub mod snowmask;
pub mod trend;
pub mod spr;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
