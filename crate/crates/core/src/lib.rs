//! Data-driven modelling of harmonic current emissions from harmonic voltages.
//!
//! The crate is organised along the pipeline: [`nn`] (tensors, tape-based
//! differentiation, Adam), [`models`] (MCReSAnet ensemble plus MLP and CNN
//! baselines), [`data`] (CSV ingestion, preprocessing, synthetic generator),
//! [`train`], [`metrics`] and [`explain`] (Shapley attribution).

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
    }};
}

pub mod cli;
pub mod data;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod seeds;
pub mod train;

pub use error::{Error, Result};
