//! Budgeted one-bit holdout validation for adaptive data analysis.
//!
//! A [`GenericHoldoutOracle`](mechanisms::GenericHoldoutOracle) owns a sealed
//! holdout set and answers each hypothesis test with a single bit. With a
//! query budget `s`, a confirmation budget `k` and per-test level
//! `p0 / s^k`, the chance that any adaptively chosen false hypothesis is
//! confirmed stays below `p0`. Leaky baselines, scripted analysts (including
//! a Freedman-paradox adversary) and a seeded Monte Carlo harness are
//! provided to check that claim empirically.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod analysts;
pub mod data;
pub mod error;
pub mod loss;
pub mod mechanisms;
pub mod model;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod testkit;

pub use error::{Error, Result};
