//! Sparsely spread CDMA: finite-instance decoders and large-system analysis.

pub mod bp;
pub mod channel;
pub mod chip_bound;
pub mod ensembles;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod kernel;
pub mod math;
pub mod metrics;
pub mod popdyn;
pub mod rng;
pub mod stability;

pub use error::{Error, Result};
