//! Std companion to `genhold-core`: file formats, a parallel replication
//! driver, the Freedman attack demo and the `genhold` command line.

pub mod attack;
pub mod cli;
pub mod formats;
pub mod parallel;
