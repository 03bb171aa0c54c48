//! Wait-free logs and a universal construction for systems where processes
//! keep arriving, plus a deterministic harness to explore their executions
//! and checkers for the properties they promise.

pub mod checkers;
pub mod cli;
pub mod harness;
pub mod substrate;
pub mod universal;
pub mod weaklog;
