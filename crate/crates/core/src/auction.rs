//! Online auction: greedy allocation plus critical-price payments.
//!
//! Every served bidder pays the smallest reported valuation with which it
//! would still have been served on the same sample path, all other bids held
//! fixed. Prices are found by bisection on `[0, w]` and reported as the
//! smallest verified winning value, so they overestimate the critical value
//! by at most [`PRICE_TOLERANCE`].

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuctionError, ModelError};
use crate::model::{simulate_window, Instance, Ledger, Payment, Request, Run, SamplePath, Slot};
use crate::online_greedy::{run_online, GreedyConfig};

/// Bisection stops once the bracket is this narrow (currency units).
pub const PRICE_TOLERANCE: f64 = 1e-6;

/// `q0 = Q(1-p0)/p0` for a system of identical T2 channels and no T1 channels.
pub fn reservation_q0(inst: &Instance) -> Result<f64, AuctionError> {
    let first = inst.t2().first().ok_or(AuctionError::NotHomogeneous)?;
    if !inst.t1().is_empty() || inst.t2().iter().any(|c| c != first) {
        return Err(AuctionError::NotHomogeneous);
    }
    Ok(inst.t2_stats()[0].cost)
}

/// `q1 = Σ_j c_j m_j`, the expected cost per request when channel `j`
/// serves a share `m_j ∝ v_j` of requests (`v = π1` on T1, `pI·p0` on T2).
pub fn reservation_q1(inst: &Instance) -> Result<f64, AuctionError> {
    let t2: Vec<(f64, f64)> = inst
        .t2()
        .iter()
        .zip(inst.t2_stats())
        .map(|(c, s)| (c.idle_and_sensed_idle(), s.cost))
        .collect();
    let total: f64 = inst.t1().iter().map(|c| c.idle_prob).sum::<f64>() + t2.iter().map(|(v, _)| v).sum::<f64>();
    if total <= 0.0 {
        return Err(AuctionError::NoUsableChannel);
    }
    Ok(t2.iter().filter(|(v, _)| *v > 0.0).map(|(v, c)| c * v / total).sum())
}

/// Reservation-price policy for the T2 channels.
///
/// Serialized as a number or one of `cost`, `auto-q0`, `auto-q1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReservationRepr", into = "ReservationRepr")]
pub enum Reservation {
    /// `θ(k) = c_k`.
    CostBased,
    Flat(f64),
    AutoQ0,
    AutoQ1,
}

impl Reservation {
    pub fn config(&self, inst: &Instance) -> Result<GreedyConfig, AuctionError> {
        Ok(match *self {
            Reservation::CostBased => GreedyConfig::cost_based(inst),
            Reservation::Flat(q) => GreedyConfig::flat(inst, q)?,
            Reservation::AutoQ0 => GreedyConfig::flat(inst, reservation_q0(inst)?)?,
            Reservation::AutoQ1 => GreedyConfig::flat(inst, reservation_q1(inst)?)?,
        })
    }

    /// Like [`Reservation::config`], but T1 channels charge the reservation
    /// price too, so every winner pays at least it. Under `cost` the T1 price
    /// is the T1 cost, zero.
    pub fn config_with_t1(&self, inst: &Instance) -> Result<GreedyConfig, AuctionError> {
        let q = match *self {
            Reservation::CostBased => 0.0,
            Reservation::Flat(q) => q,
            Reservation::AutoQ0 => reservation_q0(inst)?,
            Reservation::AutoQ1 => reservation_q1(inst)?,
        };
        Ok(self.config(inst)?.with_t1_reservation(q)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ReservationRepr {
    Number(f64),
    Name(String),
}

impl TryFrom<ReservationRepr> for Reservation {
    type Error = String;

    fn try_from(r: ReservationRepr) -> Result<Self, String> {
        match r {
            ReservationRepr::Number(q) => Reservation::from_str(&q.to_string()),
            ReservationRepr::Name(s) => s.parse(),
        }
    }
}

impl From<Reservation> for ReservationRepr {
    fn from(r: Reservation) -> Self {
        match r {
            Reservation::Flat(q) => ReservationRepr::Number(q),
            other => ReservationRepr::Name(other.to_string()),
        }
    }
}

impl fmt::Display for Reservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reservation::CostBased => f.write_str("cost"),
            Reservation::Flat(q) => write!(f, "{q}"),
            Reservation::AutoQ0 => f.write_str("auto-q0"),
            Reservation::AutoQ1 => f.write_str("auto-q1"),
        }
    }
}

impl FromStr for Reservation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "cost" | "cost-based" => Ok(Reservation::CostBased),
            "auto-q0" => Ok(Reservation::AutoQ0),
            "auto-q1" => Ok(Reservation::AutoQ1),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|q| q.is_finite() && *q >= 0.0)
                .map(Reservation::Flat)
                .ok_or_else(|| format!("expected a nonnegative number, `cost`, `auto-q0` or `auto-q1`, got `{other}`")),
        }
    }
}

/// Whether request `idx` is served when its valuation is `value`, replaying
/// the greedy allocation from its arrival slot on `path`. The allocation
/// before the arrival slot is taken from `run`, which must be the run of
/// `inst` under `cfg`.
fn wins_at(
    inst: &Instance,
    path: &SamplePath,
    cfg: &GreedyConfig,
    idx: usize,
    run: &Run,
    value: f64,
) -> Result<bool, ModelError> {
    let mut bid = *inst.request(idx);
    bid.valuation = value;
    let replay = inst.with_request(idx, bid)?;
    let Some(last) = replay.last_slot(idx) else { return Ok(false) };
    let mut ledger = Ledger::prefix(&replay, &run.outcome, bid.arrival);
    simulate_window(&mut ledger, path, cfg, bid.arrival..=last, Some(idx))?;
    Ok(ledger.is_served(idx))
}

/// Critical price of served request `idx`.
pub fn critical_price(
    inst: &Instance,
    path: &SamplePath,
    cfg: &GreedyConfig,
    idx: usize,
    run: &Run,
) -> Result<f64, AuctionError> {
    let req = inst.request(idx);
    if !run.outcome.is_served(req.id) {
        return Err(AuctionError::NotServed(req.id));
    }
    let mut probes: Vec<(f64, bool)> = Vec::new();
    let mut probe = |v: f64| -> Result<bool, AuctionError> {
        let won = wins_at(inst, path, cfg, idx, run, v)?;
        probes.push((v, won));
        Ok(won)
    };
    if !probe(req.valuation)? {
        return Err(AuctionError::NonMonotone {
            id: req.id,
            detail: "replay at the reported valuation does not win".into(),
        });
    }
    let (mut lo, mut hi) = (0.0, req.valuation);
    while hi - lo > PRICE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let max_lose = probes.iter().filter(|p| !p.1).map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_win = probes.iter().filter(|p| p.1).map(|p| p.0).fold(f64::INFINITY, f64::min);
    if max_lose >= min_win {
        return Err(AuctionError::NonMonotone {
            id: req.id,
            detail: format!("loses at {max_lose} but wins at {min_win}"),
        });
    }
    Ok(hi)
}

/// Greedy allocation with critical-price payments collected at each
/// winner's reported deadline. Revenue is payments minus collision penalties.
pub fn run_auction(inst: &Instance, path: &SamplePath, cfg: &GreedyConfig) -> Result<Run, AuctionError> {
    let mut run = run_online(inst, path, cfg)?;
    let mut payments = std::collections::BTreeMap::new();
    for s in &run.outcome.services {
        let amount = critical_price(inst, path, cfg, s.index, &run)?;
        let collected_slot = inst.request(s.index).deadline;
        payments.insert(s.request, Payment { amount, served_slot: s.slot, collected_slot });
    }
    run.outcome.payments = payments;
    run.outcome.revenue =
        Some(run.outcome.total_payments() - inst.penalty() * run.outcome.collision_count() as f64);
    Ok(run)
}

/// Utility of request `idx` with true valuation `true_value` when it bids `bid`.
pub fn utility(
    inst: &Instance,
    path: &SamplePath,
    cfg: &GreedyConfig,
    idx: usize,
    bid: Request,
    true_value: f64,
) -> Result<f64, AuctionError> {
    let reported = inst.with_request(idx, bid)?;
    let run = run_online(&reported, path, cfg)?;
    if !run.outcome.is_served(bid.id) {
        return Ok(0.0);
    }
    Ok(true_value - critical_price(&reported, path, cfg, idx, &run)?)
}

/// Whether request `idx` is served when it bids `bid` (full rerun).
pub fn wins_with(
    inst: &Instance,
    path: &SamplePath,
    cfg: &GreedyConfig,
    idx: usize,
    bid: Request,
) -> Result<bool, ModelError> {
    let reported = inst.with_request(idx, bid)?;
    Ok(run_online(&reported, path, cfg)?.outcome.is_served(bid.id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsicViolation {
    pub bidder: u32,
    pub truthful: Request,
    pub misreport: Request,
    pub truthful_utility: f64,
    pub misreport_utility: f64,
}

impl DsicViolation {
    pub fn gain(&self) -> f64 {
        self.misreport_utility - self.truthful_utility
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsicReport {
    pub trials: usize,
    pub violations: Vec<DsicViolation>,
    /// Largest utility gain of any misreport (negative if every misreport lost utility).
    pub max_gain: f64,
}

/// Samples `(bidder, misreport)` pairs on a fixed path and reports every
/// misreport that beats truthful bidding by more than [`PRICE_TOLERANCE`].
///
/// Misreports change the valuation, shrink the window (`â ≥ a`, `d̂ ≤ d`), or both.
pub fn dsic_probe(
    inst: &Instance,
    path: &SamplePath,
    cfg: &GreedyConfig,
    trials: usize,
    seed: u64,
) -> Result<DsicReport, AuctionError> {
    let bidders: Vec<usize> = (0..inst.requests().len()).filter(|&i| inst.last_slot(i).is_some()).collect();
    let mut report = DsicReport { trials: 0, violations: vec![], max_gain: f64::NEG_INFINITY };
    if bidders.is_empty() {
        return Ok(report);
    }
    let truthful = run_auction(inst, path, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let idx = bidders[rng.random_range(0..bidders.len())];
        let truth = *inst.request(idx);
        let u_truth = truthful
            .outcome
            .payments
            .get(&truth.id)
            .map_or(0.0, |p| truth.valuation - p.amount);
        let mut bid = truth;
        let kind = rng.random_range(0..3u8);
        if kind != 1 {
            bid.valuation = loop {
                let v = rng.random_range(0.0..2.0 * truth.valuation + 1.0);
                if v != truth.valuation {
                    break v;
                }
            };
        }
        if kind != 0 {
            let last = inst.last_slot(idx).expect("bidder has a nonempty window");
            bid.arrival = rng.random_range(truth.arrival..=last);
            let last_reported: Slot = rng.random_range(bid.arrival..=last);
            bid.deadline = match inst.deadline_mode() {
                crate::model::DeadlineMode::Exclusive => last_reported + 1,
                crate::model::DeadlineMode::Inclusive => last_reported,
            };
        }
        let u = utility(inst, path, cfg, idx, bid, truth.valuation)?;
        report.trials += 1;
        report.max_gain = report.max_gain.max(u - u_truth);
        if u - u_truth > PRICE_TOLERANCE {
            report.violations.push(DsicViolation {
                bidder: truth.id,
                truthful: truth,
                misreport: bid,
                truthful_utility: u_truth,
                misreport_utility: u,
            });
        }
    }
    Ok(report)
}
