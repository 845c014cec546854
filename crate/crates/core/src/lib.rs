//! Two-node slotted random access in which the second node runs on RF energy
//! harvested from the first node's transmissions.
//!
//! The crate has two halves. The analytic half covers the harvesting statistics
//! in [`harvest`], battery occupancies in [`battery`] and stable-throughput
//! regions in [`stability`]. The empirical half is the slot simulator in
//! [`engine`] plus the sweeps and exports in [`experiments`]. [`cli`] wraps
//! both behind one executable.

pub mod battery;
pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod harvest;
pub mod params;
pub mod rng;
pub mod stability;

pub use error::{Error, Result};
