//! Storage capacity requirements from accepted shortfall risks.
//!
//! A study samples annual supply and demand traces for a multi-node network,
//! dispatches a storage fleet step by step with a foresight-free QP policy,
//! tallies the remaining shortfall events per user-defined category, and
//! bisects for the smallest fleet capacity meeting each category's
//! chance constraint.

pub mod config;
pub mod dispatch;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod model;
pub mod output;
pub mod sizing;
pub mod synthetic;
pub mod tracegen;

pub use error::{Error, Result};
