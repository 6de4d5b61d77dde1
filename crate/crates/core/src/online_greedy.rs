//! Greedy online allocation.
//!
//! Each slot, outstanding requests are ranked by valuation (highest first)
//! and matched to observed-idle T1 channels, then to sensed-idle T2 channels
//! in ascending expected-cost order. The T2 loop stops at the first request
//! whose valuation does not exceed the channel's reservation price `θ(k)`.
//!
//! T1 channels take no reservation price unless one is set with
//! [`GreedyConfig::with_t1_reservation`].

use crate::model::{simulate, ChannelRef, Instance, Policy, Run, SamplePath, SlotAssignment, SlotView};
use crate::error::ModelError;

/// Per-T2-channel reservation prices `θ(k)`, plus an optional price shared
/// by the T1 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyConfig {
    theta: Vec<f64>,
    t1_theta: Option<f64>,
}

impl GreedyConfig {
    /// `θ(k) = c_k`, the expected collision cost per service on channel `k`.
    pub fn cost_based(inst: &Instance) -> Self {
        Self { theta: inst.t2_stats().iter().map(|s| s.cost).collect(), t1_theta: None }
    }

    /// `θ(k) = q` on every channel.
    pub fn flat(inst: &Instance, q: f64) -> Result<Self, ModelError> {
        Self::new(vec![q; inst.t2().len()])
    }

    pub fn new(theta: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(&bad) = theta.iter().find(|t| t.is_nan() || **t < 0.0) {
            return Err(ModelError::Undefined(format!("reservation price {bad} must be nonnegative")));
        }
        Ok(Self { theta, t1_theta: None })
    }

    /// Requires `w > q` on T1 channels as well. The T1 loop then stops at the
    /// first request that fails, like the T2 loop.
    pub fn with_t1_reservation(mut self, q: f64) -> Result<Self, ModelError> {
        if q.is_nan() || q < 0.0 {
            return Err(ModelError::Undefined(format!("reservation price {q} must be nonnegative")));
        }
        self.t1_theta = Some(q);
        Ok(self)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn t1_theta(&self) -> Option<f64> {
        self.t1_theta
    }
}

/// One slot of the greedy allocation.
///
/// Sorting is stable: equal valuations keep instance order, equal costs keep
/// channel index order.
pub fn greedy_step(
    inst: &Instance,
    outstanding: &[usize],
    idle_t1: &[usize],
    sensed_idle_t2: &[usize],
    cfg: &GreedyConfig,
) -> SlotAssignment {
    let mut asg = SlotAssignment::new();
    if outstanding.is_empty() {
        return asg;
    }
    let w = |r: usize| inst.request(r).valuation;
    let mut requests = outstanding.to_vec();
    requests.sort_by(|&a, &b| w(b).total_cmp(&w(a)));
    let stats = inst.t2_stats();
    let mut channels = sensed_idle_t2.to_vec();
    channels.sort_by(|&a, &b| stats[a].cost.total_cmp(&stats[b].cost).then(a.cmp(&b)));

    let mut next = requests.into_iter().peekable();
    for &l in idle_t1 {
        let Some(&r) = next.peek() else { return asg };
        if cfg.t1_theta.is_some_and(|q| w(r) <= q) {
            break;
        }
        asg.push(r, ChannelRef::T1(l));
        next.next();
    }
    for k in channels {
        let Some(&r) = next.peek() else { break };
        if w(r) <= cfg.theta[k] {
            break;
        }
        asg.push(r, ChannelRef::T2(k));
        next.next();
    }
    asg
}

impl Policy for GreedyConfig {
    fn assign(&self, view: &SlotView<'_>) -> SlotAssignment {
        greedy_step(view.inst, view.outstanding, view.idle_t1, view.sensed_idle_t2, self)
    }
}

/// Runs the greedy allocation over a whole path. Requests become visible at
/// their arrival slot; collided requests stay outstanding.
pub fn run_online(inst: &Instance, path: &SamplePath, cfg: &GreedyConfig) -> Result<Run, ModelError> {
    simulate(inst, path, cfg)
}
