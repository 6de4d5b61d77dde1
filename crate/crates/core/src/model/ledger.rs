use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::Serialize;

use super::{Instance, SamplePath, Slot};
use crate::error::ModelError;

/// A channel, tagged with its family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ChannelRef {
    T1(usize),
    T2(usize),
}

/// Per-slot allocation: `(request index, channel)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotAssignment {
    pairs: Vec<(usize, ChannelRef)>,
}

impl SlotAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: Vec<(usize, ChannelRef)>) -> Self {
        Self { pairs }
    }

    pub fn push(&mut self, request: usize, channel: ChannelRef) {
        self.pairs.push((request, channel));
    }

    pub fn pairs(&self) -> &[(usize, ChannelRef)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn t2_count(&self) -> usize {
        self.pairs.iter().filter(|(_, c)| matches!(c, ChannelRef::T2(_))).count()
    }

    pub fn channel_of(&self, request: usize) -> Option<ChannelRef> {
        self.pairs.iter().find(|(r, _)| *r == request).map(|(_, c)| *c)
    }

    /// Checks one-request-per-channel and one-channel-per-request, and that
    /// every channel is available at `t` on `path`.
    pub fn validate(&self, inst: &Instance, path: &SamplePath, t: Slot) -> Result<(), ModelError> {
        let mut seen_req = vec![false; inst.requests().len()];
        let mut seen_t1 = vec![false; inst.t1().len()];
        let mut seen_t2 = vec![false; inst.t2().len()];
        for &(r, ch) in &self.pairs {
            match seen_req.get_mut(r) {
                None => return Err(ModelError::UnknownRequest { slot: t, index: r }),
                Some(true) => return Err(ModelError::DuplicateRequest { slot: t, index: r }),
                Some(s) => *s = true,
            }
            let (seen, available) = match ch {
                ChannelRef::T1(k) => (seen_t1.get_mut(k), k < inst.t1().len() && !path.t1_busy(t, k)),
                ChannelRef::T2(k) => {
                    (seen_t2.get_mut(k), k < inst.t2().len() && !path.t2_sensed_busy(t, k))
                }
            };
            match seen {
                None => return Err(ModelError::UnknownChannel { slot: t, channel: ch }),
                Some(true) => return Err(ModelError::DuplicateChannel { slot: t, channel: ch }),
                Some(s) => *s = true,
            }
            if !available {
                return Err(ModelError::Unavailable { slot: t, channel: ch });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Service {
    pub request: u32,
    pub index: usize,
    pub slot: Slot,
    pub channel: ChannelRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Collision {
    pub slot: Slot,
    pub channel: usize,
    pub request: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Payment {
    pub amount: f64,
    pub served_slot: Slot,
    /// Reported deadline, when the payment is collected.
    pub collected_slot: Slot,
}

/// Ledger of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub services: Vec<Service>,
    pub collisions: Vec<Collision>,
    pub welfare: f64,
    /// Keyed by request id; auction runs only.
    pub payments: BTreeMap<u32, Payment>,
    /// Auction runs only.
    pub revenue: Option<f64>,
}

impl Outcome {
    pub fn served_count(&self) -> usize {
        self.services.len()
    }

    pub fn collision_count(&self) -> usize {
        self.collisions.len()
    }

    pub fn is_served(&self, id: u32) -> bool {
        self.services.iter().any(|s| s.request == id)
    }

    pub fn service_of(&self, id: u32) -> Option<&Service> {
        self.services.iter().find(|s| s.request == id)
    }

    /// Served valuations minus collision penalties, recomputed from the ledger.
    pub fn recompute_welfare(&self, inst: &Instance) -> f64 {
        let served: f64 = self.services.iter().map(|s| inst.request(s.index).valuation).sum();
        served - inst.penalty() * self.collisions.len() as f64
    }

    pub fn total_payments(&self) -> f64 {
        self.payments.values().map(|p| p.amount).sum()
    }
}

/// Incremental welfare accounting, slot by slot.
#[derive(Debug, Clone)]
pub struct Ledger<'a> {
    inst: &'a Instance,
    served: Vec<bool>,
    services: Vec<Service>,
    collisions: Vec<Collision>,
}

impl<'a> Ledger<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        Self { inst, served: vec![false; inst.requests().len()], services: vec![], collisions: vec![] }
    }

    /// Ledger holding the part of `outcome` that happened before slot `before`.
    pub fn prefix(inst: &'a Instance, outcome: &Outcome, before: Slot) -> Self {
        let mut l = Self::new(inst);
        for s in outcome.services.iter().filter(|s| s.slot < before) {
            l.served[s.index] = true;
            l.services.push(*s);
        }
        l.collisions.extend(outcome.collisions.iter().filter(|c| c.slot < before));
        l
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn served_flags(&self) -> &[bool] {
        &self.served
    }

    pub fn is_served(&self, idx: usize) -> bool {
        self.served[idx]
    }

    pub fn outstanding(&self, t: Slot) -> Vec<usize> {
        super::active_set(self.inst, t, &self.served)
    }

    /// Resolves one slot: T1 assignments always serve, T2 assignments serve
    /// iff the channel is truly idle and otherwise record a collision.
    pub fn apply(&mut self, path: &SamplePath, t: Slot, asg: &SlotAssignment) -> Result<(), ModelError> {
        asg.validate(self.inst, path, t)?;
        for &(r, _) in asg.pairs() {
            let id = self.inst.request(r).id;
            if !self.inst.is_active(r, t) {
                return Err(ModelError::Inactive { slot: t, id });
            }
            if self.served[r] {
                return Err(ModelError::AlreadyServed { slot: t, id });
            }
        }
        for &(r, ch) in asg.pairs() {
            let id = self.inst.request(r).id;
            let ok = match ch {
                ChannelRef::T1(_) => true,
                ChannelRef::T2(k) => !path.t2_busy(t, k),
            };
            if ok {
                self.served[r] = true;
                self.services.push(Service { request: id, index: r, slot: t, channel: ch });
            } else if let ChannelRef::T2(k) = ch {
                self.collisions.push(Collision { slot: t, channel: k, request: id });
            }
        }
        Ok(())
    }

    pub fn welfare(&self) -> f64 {
        let served: f64 = self.services.iter().map(|s| self.inst.request(s.index).valuation).sum();
        served - self.inst.penalty() * self.collisions.len() as f64
    }

    pub fn into_outcome(self) -> Outcome {
        let welfare = self.welfare();
        Outcome { services: self.services, collisions: self.collisions, welfare, ..Outcome::default() }
    }
}

/// Scores a full per-slot assignment sequence against a sample path.
/// `assignments[t-1]` is the assignment of slot `t`; missing slots are empty.
pub fn score_outcome(
    inst: &Instance,
    path: &SamplePath,
    assignments: &[SlotAssignment],
) -> Result<Outcome, ModelError> {
    path.check_against(inst)?;
    if assignments.len() > inst.horizon() as usize {
        return Err(ModelError::PathLength { got: assignments.len(), want: inst.horizon() as usize });
    }
    let mut ledger = Ledger::new(inst);
    for (i, asg) in assignments.iter().enumerate() {
        ledger.apply(path, i as Slot + 1, asg)?;
    }
    Ok(ledger.into_outcome())
}

/// What a scheduler sees at the start of a slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub inst: &'a Instance,
    pub slot: Slot,
    /// Active, not yet served requests (indices, ascending).
    pub outstanding: &'a [usize],
    /// Γ: T1 channels observed idle.
    pub idle_t1: &'a [usize],
    /// S: T2 channels sensed idle.
    pub sensed_idle_t2: &'a [usize],
}

/// A scheduler that decides from the current information state only.
pub trait Policy {
    fn assign(&self, view: &SlotView<'_>) -> SlotAssignment;
}

impl<F> Policy for F
where
    F: Fn(&SlotView<'_>) -> SlotAssignment,
{
    fn assign(&self, view: &SlotView<'_>) -> SlotAssignment {
        self(view)
    }
}

#[derive(Debug, Clone)]
pub struct Run {
    /// `assignments[t-1]` is the assignment made in slot `t`.
    pub assignments: Vec<SlotAssignment>,
    pub outcome: Outcome,
}

/// Runs `policy` over every slot of `path`.
pub fn simulate<P: Policy + ?Sized>(
    inst: &Instance,
    path: &SamplePath,
    policy: &P,
) -> Result<Run, ModelError> {
    path.check_against(inst)?;
    let mut ledger = Ledger::new(inst);
    let assignments = simulate_window(&mut ledger, path, policy, 1..=inst.horizon(), None)?;
    Ok(Run { assignments, outcome: ledger.into_outcome() })
}

/// Runs `policy` over `slots`, continuing from the state in `ledger`.
/// Stops after the slot in which request `stop_when_served` gets served, if given.
pub fn simulate_window<P: Policy + ?Sized>(
    ledger: &mut Ledger<'_>,
    path: &SamplePath,
    policy: &P,
    slots: RangeInclusive<Slot>,
    stop_when_served: Option<usize>,
) -> Result<Vec<SlotAssignment>, ModelError> {
    let inst = ledger.instance();
    let mut out = Vec::new();
    for t in slots {
        let outstanding = ledger.outstanding(t);
        let idle_t1 = path.idle_t1(t);
        let sensed = path.sensed_idle_t2(t);
        let asg = if outstanding.is_empty() {
            SlotAssignment::new()
        } else {
            policy.assign(&SlotView {
                inst,
                slot: t,
                outstanding: &outstanding,
                idle_t1: &idle_t1,
                sensed_idle_t2: &sensed,
            })
        };
        ledger.apply(path, t, &asg)?;
        out.push(asg);
        if stop_when_served.is_some_and(|i| ledger.is_served(i)) {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Request, T1Channel, T2Channel};

    fn one_t2(w: f64, busy: Vec<bool>) -> (Instance, SamplePath) {
        let h = busy.len() as Slot;
        let inst = Instance::with_horizon(
            vec![Request::new(7, 1, h + 1, w)],
            vec![],
            vec![T2Channel::new(0.5, 0.1, 0.1).unwrap()],
            10.0,
            h + 1,
            Default::default(),
        )
        .unwrap();
        let n = busy.len();
        let mut b: Vec<Vec<bool>> = busy.into_iter().map(|x| vec![x]).collect();
        b.push(vec![true]);
        let path = SamplePath::from_parts(vec![vec![]; n + 1], b, vec![vec![false]; n + 1]).unwrap();
        (inst, path)
    }

    fn t2(k: usize, r: usize) -> SlotAssignment {
        SlotAssignment::from_pairs(vec![(r, ChannelRef::T2(k))])
    }

    #[test]
    fn idle_t2_serves() {
        let (inst, path) = one_t2(5.0, vec![false]);
        let o = score_outcome(&inst, &path, &[t2(0, 0)]).unwrap();
        assert_eq!(o.welfare, 5.0);
        assert_eq!(o.collision_count(), 0);
        assert!(o.is_served(7));
    }

    #[test]
    fn busy_t2_collides() {
        let (inst, path) = one_t2(5.0, vec![true]);
        let o = score_outcome(&inst, &path, &[t2(0, 0)]).unwrap();
        assert_eq!(o.welfare, -10.0);
        assert_eq!(o.collision_count(), 1);
        assert!(!o.is_served(7));
    }

    #[test]
    fn collide_then_serve() {
        let (inst, path) = one_t2(5.0, vec![true, false]);
        let o = score_outcome(&inst, &path, &[t2(0, 0), t2(0, 0)]).unwrap();
        assert_eq!(o.welfare, 5.0 - 10.0);
        assert_eq!(o.served_count(), 1);
        assert_eq!(o.service_of(7).unwrap().slot, 2);
        assert_eq!(o.recompute_welfare(&inst), o.welfare);
    }

    #[test]
    fn contract_violations() {
        let (inst, path) = one_t2(5.0, vec![false, false]);
        // already served
        let e = score_outcome(&inst, &path, &[t2(0, 0), t2(0, 0)]).unwrap_err();
        assert!(matches!(e, ModelError::AlreadyServed { slot: 2, id: 7 }));
        // sensed busy
        let sensed_busy = SamplePath::from_parts(
            vec![vec![]; 3],
            vec![vec![false]; 3],
            vec![vec![true]; 3],
        )
        .unwrap();
        let e = score_outcome(&inst, &sensed_busy, &[t2(0, 0)]).unwrap_err();
        assert!(matches!(e, ModelError::Unavailable { .. }));
        // duplicate channel
        let dup = SlotAssignment::from_pairs(vec![(0, ChannelRef::T2(0)), (0, ChannelRef::T2(0))]);
        assert!(score_outcome(&inst, &path, &[dup]).is_err());
        // unknown channel
        assert!(score_outcome(&inst, &path, &[t2(3, 0)]).is_err());
    }

    #[test]
    fn busy_t1_rejected() {
        let inst = Instance::new(
            vec![Request::new(1, 1, 2, 3.0)],
            vec![T1Channel::new(0.5).unwrap()],
            vec![],
            10.0,
        )
        .unwrap();
        let path = SamplePath::from_parts(vec![vec![true], vec![false]], vec![vec![]; 2], vec![vec![]; 2])
            .unwrap();
        let asg = SlotAssignment::from_pairs(vec![(0, ChannelRef::T1(0))]);
        assert!(matches!(
            score_outcome(&inst, &path, &[asg]),
            Err(ModelError::Unavailable { slot: 1, channel: ChannelRef::T1(0) })
        ));
    }

    #[test]
    fn inactive_rejected() {
        let inst = Instance::new(vec![Request::new(1, 2, 3, 3.0)], vec![T1Channel::new(1.0).unwrap()], vec![], 1.0)
            .unwrap();
        let path = SamplePath::from_parts(vec![vec![false]; 3], vec![vec![]; 3], vec![vec![]; 3]).unwrap();
        let asg = SlotAssignment::from_pairs(vec![(0, ChannelRef::T1(0))]);
        assert!(matches!(score_outcome(&inst, &path, &[asg]), Err(ModelError::Inactive { slot: 1, .. })));
    }
}
