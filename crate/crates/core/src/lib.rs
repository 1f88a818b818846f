//! Simulation and analysis engine for platform trials with staggered arm
//! entry and a shared control.
//!
//! The crate covers the full pipeline: block-randomized trial schedules
//! ([`design`]), response generation under configurable time trends
//! ([`datagen`]), five treatment-vs-control analyses that differ in how they
//! use non-concurrent controls ([`freq`], [`timemachine`], [`map_prior`]),
//! and a Monte Carlo harness that estimates rejection rates over many
//! replications ([`harness`]).

pub mod analysis;
pub mod datagen;
pub mod design;
pub mod error;
pub mod freq;
pub mod harness;
pub mod map_prior;
pub mod stats;
pub mod timemachine;

pub use error::{Error, Result};
