//! Koopman operators from time series: EDMD fitting, spectral discovery of
//! invariant sets, and stitching of local operators into a global one.

pub mod discovery;
pub mod dynamics;
pub mod edmd;
pub mod error;
pub mod io;
pub mod lifting;
pub mod linalg;
pub mod spectral;
pub mod stitching;

pub use error::{Error, Result};
