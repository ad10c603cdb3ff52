//! Optical pumping of Cesium Zeeman sublevels with incoherent Raman transitions.
//!
//! The crate synthesizes tailored Raman noise spectra, turns them into
//! incoherent transition rates, evolves the 16 ground-state populations through
//! pump/repump cycles, simulates Raman spectroscopy scans with shot noise, and
//! recovers the populations by fitting a sum of Lorentzians.

pub mod atom;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod io;
pub mod measurement;
pub mod pipeline;
pub mod spectrum;

pub use error::{Error, Result};
