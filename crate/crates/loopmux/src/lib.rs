//! Simulation and analytics for temporal multiplexing of a heralded
//! single-photon source with a single switchable fibre delay loop.
//!
//! The crate has three layers:
//!
//! - [`analytics`]: the closed-form performance model (per-bin delivery
//!   probability, rate trade-offs, multi-source speedup, optimal depth) and
//!   the coincidence estimators;
//! - [`controller`] + [`photon_stats`] + [`sim`]: a Monte Carlo engine that
//!   emulates the feed-forward switch protocol cycle by cycle and tallies
//!   heralds, deliveries, dumps and detector clicks;
//! - [`config`] + [`commands`]: the TOML-configured CLI front end producing
//!   CSV datasets (analytic tables, simulation estimates, mode-comparison
//!   sweeps, optimal-depth scans).
//!
//! Closed form and simulation validate each other: the acceptance suite in
//! `tests/acceptance.rs` pins that agreement.

pub mod analytics;
pub mod commands;
pub mod config;
pub mod controller;
pub mod error;
pub mod photon_stats;
pub mod sim;

pub use error::{Error, Result};
