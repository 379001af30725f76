//! Optimal spectrum auctions under uncertain spectrum availability.
//!
//! A moderator fuses the binary sensing reports of N cognitive radios (CRs)
//! with a k-out-of-N rule, then leases the band through a Myerson-style
//! auction whose reserve prices in the risk of colliding with the primary
//! user. The crate covers sensing and fusion ([`sensing`]), valuation models
//! ([`valuation`]), the mechanism itself ([`auction`]), baselines
//! ([`comparison`]), statistical truthfulness checks ([`verifier`]) and the
//! parameter sweeps ([`experiments`]).

// `!(x >= lo)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auction;
pub mod cli;
pub mod comparison;
pub mod config;
pub mod error;
pub mod experiments;
pub mod sensing;
pub mod sim;
pub mod valuation;
pub mod verifier;

pub use error::{Error, Result};
