use thiserror::Error;

use crate::model::{ChannelRef, Slot};

/// Errors raised while constructing or scoring instances.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("probability `{name}` = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("collision penalty must be finite and nonnegative, got {0}")]
    Penalty(f64),
    #[error("request {id}: {reason}")]
    Request { id: u32, reason: String },
    #[error("duplicate request id {0}")]
    DuplicateId(u32),
    #[error("horizon {horizon} does not cover deadline {deadline} of request {id}")]
    Horizon { horizon: Slot, deadline: Slot, id: u32 },
    #[error("sample path has {got} slots, instance horizon is {want}")]
    PathLength { got: usize, want: usize },
    #[error("sample path slot {slot} has wrong channel dimensions")]
    PathShape { slot: Slot },
    #[error("slot {slot}: {channel:?} assigned while not available")]
    Unavailable { slot: Slot, channel: ChannelRef },
    #[error("slot {slot}: request {id} is not active")]
    Inactive { slot: Slot, id: u32 },
    #[error("slot {slot}: request {id} was already served")]
    AlreadyServed { slot: Slot, id: u32 },
    #[error("slot {slot}: request index {index} assigned more than once")]
    DuplicateRequest { slot: Slot, index: usize },
    #[error("slot {slot}: {channel:?} assigned more than once")]
    DuplicateChannel { slot: Slot, channel: ChannelRef },
    #[error("slot {slot}: unknown request index {index}")]
    UnknownRequest { slot: Slot, index: usize },
    #[error("slot {slot}: unknown channel {channel:?}")]
    UnknownChannel { slot: Slot, channel: ChannelRef },
    #[error("{0}")]
    Undefined(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DpError {
    #[error("state space {size:.3e} exceeds DP budget {budget:.3e}")]
    BudgetExceeded { size: f64, budget: f64 },
    #[error("{active} simultaneously active requests cannot be encoded in a subset mask")]
    TooManyActive { active: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq)]
pub enum AuctionError {
    #[error("request {0} was not served; it has no critical price")]
    NotServed(u32),
    #[error("request {id}: winning is not monotone in the reported valuation ({detail})")]
    NonMonotone { id: u32, detail: String },
    #[error("no channel has a positive chance of serving a request")]
    NoUsableChannel,
    #[error("reservation price q0 requires homogeneous T2 channels and no T1 channels")]
    NotHomogeneous,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("enumeration of {size:.3e} realizations exceeds budget {budget:.3e}")]
    BudgetExceeded { size: f64, budget: f64 },
    #[error("instance outside oracle guard (H={horizon}, C={channels}, N={requests}; need H<=3, C<=2, N<=3)")]
    Guard { horizon: Slot, channels: usize, requests: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
