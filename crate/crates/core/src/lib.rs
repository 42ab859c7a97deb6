//! Hyperspectral unmixing laboratory.

pub mod bench;
pub mod calibration;
pub mod config;
pub mod endmembers;
pub mod error;
pub mod hapke;
pub mod io;
pub mod metrics;
pub mod model;
pub mod qp;
pub mod scenes;
pub mod simulate;
pub mod unmix;

pub use error::{Error, Result};
