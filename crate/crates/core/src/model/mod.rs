//! Domain types shared by every scheduler: requests, channels, problem
//! instances, sample paths and the welfare ledger.

mod channel;
mod ledger;
mod path;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use channel::{derive_stats, ChannelStats, T1Channel, T2Channel, PROB_SLACK};
pub use ledger::{
    score_outcome, simulate, simulate_window, ChannelRef, Collision, Ledger, Outcome, Payment,
    Policy, Run, Service, SlotAssignment, SlotView,
};
pub use path::{sample_path, SamplePath};

use crate::error::ModelError;

/// Slot index, starting at 1.
pub type Slot = u32;

/// One single-slot spectrum demand. Doubles as a bid in the auction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u32,
    /// Earliest slot the request may be served in.
    #[serde(alias = "a")]
    pub arrival: Slot,
    #[serde(alias = "d")]
    pub deadline: Slot,
    #[serde(alias = "w")]
    pub valuation: f64,
}

impl Request {
    pub fn new(id: u32, arrival: Slot, deadline: Slot, valuation: f64) -> Self {
        Self { id, arrival, deadline, valuation }
    }
}

/// How the deadline bounds the service window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadlineMode {
    /// Window is `[a, d)`.
    #[default]
    Exclusive,
    /// Window is `[a, d]`.
    Inclusive,
}

impl DeadlineMode {
    pub fn is_active(self, req: &Request, t: Slot) -> bool {
        match self {
            DeadlineMode::Exclusive => req.arrival <= t && t < req.deadline,
            DeadlineMode::Inclusive => req.arrival <= t && t <= req.deadline,
        }
    }

    /// Last slot of the window, or `None` if the window is empty.
    pub fn last_slot(self, req: &Request) -> Option<Slot> {
        let last = match self {
            DeadlineMode::Exclusive => req.deadline.checked_sub(1)?,
            DeadlineMode::Inclusive => req.deadline,
        };
        (last >= req.arrival).then_some(last)
    }
}

/// A complete problem: requests, both channel families, penalty and horizon.
///
/// Immutable once built; T2 statistics are derived at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    requests: Vec<Request>,
    t1: Vec<T1Channel>,
    t2: Vec<T2Channel>,
    t2_stats: Vec<ChannelStats>,
    penalty: f64,
    horizon: Slot,
    mode: DeadlineMode,
}

impl Instance {
    /// Builds an instance with the smallest horizon covering every deadline.
    pub fn new(
        requests: Vec<Request>,
        t1: Vec<T1Channel>,
        t2: Vec<T2Channel>,
        penalty: f64,
    ) -> Result<Self, ModelError> {
        let horizon = requests.iter().map(|r| r.deadline).max().unwrap_or(1).max(1);
        Self::with_horizon(requests, t1, t2, penalty, horizon, DeadlineMode::Exclusive)
    }

    pub fn with_horizon(
        requests: Vec<Request>,
        t1: Vec<T1Channel>,
        t2: Vec<T2Channel>,
        penalty: f64,
        horizon: Slot,
        mode: DeadlineMode,
    ) -> Result<Self, ModelError> {
        if !penalty.is_finite() || penalty < 0.0 {
            return Err(ModelError::Penalty(penalty));
        }
        let mut ids = HashSet::new();
        for r in &requests {
            if !ids.insert(r.id) {
                return Err(ModelError::DuplicateId(r.id));
            }
            let bad = |reason: &str| ModelError::Request { id: r.id, reason: reason.into() };
            if r.arrival < 1 {
                return Err(bad("arrival slot must be >= 1"));
            }
            if r.arrival > r.deadline {
                return Err(bad("arrival after deadline"));
            }
            if !r.valuation.is_finite() || r.valuation < 0.0 {
                return Err(bad("valuation must be finite and nonnegative"));
            }
            if r.deadline > horizon {
                return Err(ModelError::Horizon { horizon, deadline: r.deadline, id: r.id });
            }
        }
        let t1 = t1
            .into_iter()
            .map(|c| T1Channel::new(c.idle_prob))
            .collect::<Result<Vec<_>, _>>()?;
        let t2 = t2.into_iter().map(T2Channel::validated).collect::<Result<Vec<_>, _>>()?;
        let t2_stats = t2.iter().map(|c| derive_stats(c, penalty)).collect();
        Ok(Self { requests, t1, t2, t2_stats, penalty, horizon: horizon.max(1), mode })
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }
    pub fn request(&self, idx: usize) -> &Request {
        &self.requests[idx]
    }
    pub fn t1(&self) -> &[T1Channel] {
        &self.t1
    }
    pub fn t2(&self) -> &[T2Channel] {
        &self.t2
    }
    pub fn t2_stats(&self) -> &[ChannelStats] {
        &self.t2_stats
    }
    pub fn penalty(&self) -> f64 {
        self.penalty
    }
    pub fn horizon(&self) -> Slot {
        self.horizon
    }
    pub fn deadline_mode(&self) -> DeadlineMode {
        self.mode
    }
    pub fn channel_count(&self) -> usize {
        self.t1.len() + self.t2.len()
    }

    pub fn is_active(&self, idx: usize, t: Slot) -> bool {
        self.mode.is_active(&self.requests[idx], t)
    }

    /// Last slot request `idx` can be served in, clipped to the horizon.
    pub fn last_slot(&self, idx: usize) -> Option<Slot> {
        self.mode.last_slot(&self.requests[idx]).map(|s| s.min(self.horizon))
    }

    /// Maximum number of simultaneously active requests over the horizon.
    pub fn max_active(&self) -> usize {
        (1..=self.horizon).map(|t| active_set(self, t, &[]).len()).max().unwrap_or(0)
    }

    /// Copy of the instance with request `idx` replaced, e.g. by a misreported bid.
    pub fn with_request(&self, idx: usize, req: Request) -> Result<Self, ModelError> {
        let mut requests = self.requests.clone();
        requests[idx] = req;
        Self::with_horizon(
            requests,
            self.t1.clone(),
            self.t2.clone(),
            self.penalty,
            self.horizon,
            self.mode,
        )
    }

    pub fn with_deadline_mode(&self, mode: DeadlineMode) -> Result<Self, ModelError> {
        Self::with_horizon(
            self.requests.clone(),
            self.t1.clone(),
            self.t2.clone(),
            self.penalty,
            self.horizon,
            mode,
        )
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.requests.iter().position(|r| r.id == id)
    }
}

/// Indices of requests active at slot `t` that are not marked in `served`.
///
/// `served` may be shorter than the request list; missing entries count as unserved.
pub fn active_set(inst: &Instance, t: Slot, served: &[bool]) -> Vec<usize> {
    (0..inst.requests.len())
        .filter(|&i| inst.is_active(i, t) && !served.get(i).copied().unwrap_or(false))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(reqs: Vec<Request>) -> Instance {
        Instance::new(reqs, vec![], vec![], 10.0).unwrap()
    }

    #[test]
    fn half_open_window() {
        let i = inst(vec![Request::new(1, 2, 5, 1.0)]);
        assert!(active_set(&i, 1, &[]).is_empty());
        assert_eq!(active_set(&i, 2, &[]), vec![0]);
        assert_eq!(active_set(&i, 4, &[]), vec![0]);
        assert!(active_set(&i, 5, &[]).is_empty());
        assert!(active_set(&i, 4, &[true]).is_empty());
    }

    #[test]
    fn inclusive_window() {
        let i = inst(vec![Request::new(1, 2, 5, 1.0)])
            .with_deadline_mode(DeadlineMode::Inclusive)
            .unwrap();
        assert_eq!(active_set(&i, 5, &[]), vec![0]);
        assert_eq!(i.last_slot(0), Some(5));
    }

    #[test]
    fn empty_requests() {
        let i = inst(vec![]);
        assert!(active_set(&i, 1, &[]).is_empty());
        assert_eq!(i.horizon(), 1);
        assert_eq!(i.max_active(), 0);
    }

    #[test]
    fn degenerate_window_is_never_active() {
        let i = inst(vec![Request::new(1, 3, 3, 1.0)]);
        assert!((1..=3).all(|t| active_set(&i, t, &[]).is_empty()));
        assert_eq!(i.last_slot(0), None);
    }

    #[test]
    fn validation() {
        let dup = Instance::new(
            vec![Request::new(1, 1, 2, 1.0), Request::new(1, 1, 3, 1.0)],
            vec![],
            vec![],
            1.0,
        );
        assert_eq!(dup.unwrap_err(), ModelError::DuplicateId(1));
        assert!(Instance::new(vec![Request::new(1, 0, 2, 1.0)], vec![], vec![], 1.0).is_err());
        assert!(Instance::new(vec![Request::new(1, 3, 2, 1.0)], vec![], vec![], 1.0).is_err());
        assert!(Instance::new(vec![Request::new(1, 1, 2, -1.0)], vec![], vec![], 1.0).is_err());
        assert!(Instance::new(vec![], vec![], vec![], -1.0).is_err());
        let short = Instance::with_horizon(
            vec![Request::new(1, 1, 4, 1.0)],
            vec![],
            vec![],
            1.0,
            3,
            DeadlineMode::Exclusive,
        );
        assert!(matches!(short, Err(ModelError::Horizon { .. })));
    }

    #[test]
    fn max_active_counts_overlap() {
        let i = inst(vec![
            Request::new(1, 1, 4, 1.0),
            Request::new(2, 2, 3, 1.0),
            Request::new(3, 3, 5, 1.0),
        ]);
        assert_eq!(i.max_active(), 2);
    }
}
