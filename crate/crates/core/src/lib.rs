//! Core model for a multi-region renewable-electricity dispatch simulator
//! and capacity optimizer: half-hourly chronological balance of solar, wind,
//! pumped-hydro storage, flexible EV charging and HVDC transfer, LCOE
//! decomposition, and Differential Evolution search over portfolio space.
//!
//! This crate is IO-free; file formats and the command line live in the
//! companion `gridopt-cli` crate.

pub mod calendar;
pub mod cost;
pub mod demand;
pub mod dispatch;
pub mod error;
pub mod network;
pub mod optimizer;
pub mod scenario;
pub mod trace;

pub mod test_fixtures;

pub use error::CoreError;
