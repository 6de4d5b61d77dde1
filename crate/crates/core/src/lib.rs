//! Joint sensing and spectrum allocation for cognitive radio networks.
//!
//! Secondary-user requests are served over two kinds of licensed channels:
//! T1 channels whose state is observed exactly, and T2 channels that must be
//! sensed before use and may collide with a primary user. The crate provides
//! an offline optimal scheduler (dynamic programming over outstanding-request
//! sets), a greedy online scheduler with reservation prices, and a
//! critical-price auction built on top of the greedy scheduler.

pub mod auction;
pub mod config;
pub mod error;
pub mod harness;
pub mod model;
pub mod offline_dp;
pub mod online_greedy;
pub mod oracle;

pub use error::{AuctionError, DpError, ModelError, OracleError};
pub use model::{Instance, Request, SamplePath, T1Channel, T2Channel};
