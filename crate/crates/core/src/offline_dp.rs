//! Optimal offline scheduling by backward induction.
//!
//! `F(D, t)` is the maximum expected welfare from the start of slot `t` to
//! the end of the horizon when `D` is the set of outstanding requests. It is
//! computed for every `D` contained in the requests active at `t`, from the
//! last slot down to the first:
//!
//! ```text
//! F(D,t) = Σ_S P(S sensed idle) Σ_Γ P(Γ observed idle) X(D,Γ,S,t)
//! X(D,Γ,S,t) = max_x Σ_{S1⊆S} P(S1 truly idle | S) [W(x,S1) + F(D',t+1)]
//! ```
//!
//! where `D'` drops requests served this slot and requests whose window
//! closes, and adds requests arriving at `t+1`. The assignment `x` is fixed
//! before `S1` is revealed.
//!
//! Idle T1 channels are interchangeable, so the T1 sum runs over the number
//! of idle channels. T2 channels with equal `p0` are interchangeable too and
//! share a class; the assignment search picks a class per request instead of
//! a concrete channel. Two pruning rules shrink the search without changing
//! the optimum:
//!
//! * a request is only paired with a T2 channel `k` when
//!   `p0(k)·w ≥ Q·(1-p0(k))`;
//! * idle T1 channels are always filled while outstanding requests remain
//!   (an extra certain service never lowers the optimum, since
//!   `F(D ∪ {i}) ≤ F(D) + w_i`).

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::DpError;
use crate::model::{
    active_set, simulate, ChannelRef, Instance, Policy, Run, SamplePath, Slot, SlotAssignment,
    SlotView,
};

pub const DEFAULT_DP_BUDGET: f64 = 1e9;
/// Environment variable overriding the default DP budget.
pub const BUDGET_ENV: &str = "CRN_DP_BUDGET";

const MAX_ACTIVE: usize = 28;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpOptions {
    /// Upper bound on `3^|T2| · 2^|T1| · 2^r · H`.
    pub budget: f64,
    /// Apply the two pruning rules described in the module docs.
    pub prune: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        let budget = std::env::var(BUDGET_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|b| *b > 0.0)
            .unwrap_or(DEFAULT_DP_BUDGET);
        Self { budget, prune: true }
    }
}

/// `3^|T2| · 2^|T1| · 2^r · H`, the quantity guarded by the DP budget.
pub fn state_space_size(inst: &Instance) -> f64 {
    3f64.powi(inst.t2().len() as i32)
        * 2f64.powi(inst.t1().len() as i32)
        * 2f64.powi(inst.max_active() as i32)
        * inst.horizon() as f64
}

/// Welfare realized in one slot: `w` for each request on an idle T1 channel
/// or on a T2 channel in `s1`, `-Q` for each request on a T2 channel in `s \ s1`.
pub fn immediate_welfare(
    inst: &Instance,
    idle_t1: &[usize],
    sensed_idle: &[usize],
    truly_idle: &[usize],
    assignment: &SlotAssignment,
) -> f64 {
    assignment
        .pairs()
        .iter()
        .map(|&(r, ch)| match ch {
            ChannelRef::T1(k) if idle_t1.contains(&k) => inst.request(r).valuation,
            ChannelRef::T2(k) if truly_idle.contains(&k) => inst.request(r).valuation,
            ChannelRef::T2(k) if sensed_idle.contains(&k) => -inst.penalty(),
            _ => 0.0,
        })
        .sum()
}

/// Channel-level quantities that do not depend on the slot.
#[derive(Debug, Clone)]
struct ChannelModel {
    /// `P(|Γ| = g)` for `g = 0..=|T1|`.
    t1_count_probs: Vec<f64>,
    /// Class of each T2 channel; channels with equal `p0` share a class.
    t2_class: Vec<usize>,
    class_p0: Vec<f64>,
    /// `(S, P(S sensed idle))` for every `S ⊆ T2` with positive probability, ascending `S`.
    sensing: Vec<(u32, f64)>,
}

impl ChannelModel {
    fn new(inst: &Instance) -> Self {
        let mut t1_count_probs = vec![1.0];
        for c in inst.t1() {
            let mut next = vec![0.0; t1_count_probs.len() + 1];
            for (g, p) in t1_count_probs.iter().enumerate() {
                next[g] += p * (1.0 - c.idle_prob);
                next[g + 1] += p * c.idle_prob;
            }
            t1_count_probs = next;
        }
        let mut class_p0: Vec<f64> = Vec::new();
        let t2_class = inst
            .t2_stats()
            .iter()
            .map(|s| {
                let p0 = s.p0();
                match class_p0.iter().position(|c| c.to_bits() == p0.to_bits()) {
                    Some(i) => i,
                    None => {
                        class_p0.push(p0);
                        class_p0.len() - 1
                    }
                }
            })
            .collect();
        let n2 = inst.t2().len();
        let sensing = (0u32..1 << n2)
            .filter_map(|s| {
                let w: f64 = inst
                    .t2_stats()
                    .iter()
                    .enumerate()
                    .map(|(k, st)| if s >> k & 1 == 1 { st.sensed_idle } else { 1.0 - st.sensed_idle })
                    .product();
                (w > 0.0).then_some((s, w))
            })
            .collect();
        Self { t1_count_probs, t2_class, class_p0, sensing }
    }

    fn class_caps(&self, sensed: impl IntoIterator<Item = usize>) -> Vec<u8> {
        let mut caps = vec![0u8; self.class_p0.len()];
        for k in sensed {
            caps[self.t2_class[k]] += 1;
        }
        caps
    }
}

/// One layer of the table: `values[m]` is `F(D, t)` for the local mask `m`
/// over `active` (bit `j` ↔ request `active[j]`).
#[derive(Debug, Clone)]
struct Layer {
    active: Vec<usize>,
    values: Vec<f64>,
}

/// How outstanding sets move from slot `t` to `t+1`.
struct Successor<'a> {
    next: Option<&'a [f64]>,
    carry: Vec<Option<u32>>,
    arrivals: u32,
    remap: Option<Vec<u32>>,
}

impl<'a> Successor<'a> {
    fn new(cur: &[usize], next: Option<&'a Layer>, cache: bool) -> Self {
        let Some(next) = next else {
            return Self { next: None, carry: vec![], arrivals: 0, remap: None };
        };
        let carry: Vec<Option<u32>> =
            cur.iter().map(|r| next.active.iter().position(|n| n == r).map(|p| p as u32)).collect();
        let arrivals = next
            .active
            .iter()
            .enumerate()
            .filter(|(_, r)| !cur.contains(r))
            .fold(0u32, |m, (j, _)| m | 1 << j);
        let mut s = Self { next: Some(&next.values), carry, arrivals, remap: None };
        if cache {
            let n = 1usize << cur.len();
            let mut remap = vec![0u32; n];
            for m in 1..n {
                let low = m.trailing_zeros() as usize;
                remap[m] = remap[m & (m - 1)] | s.carry[low].map_or(0, |b| 1 << b);
            }
            s.remap = Some(remap);
        }
        s
    }

    fn next_mask(&self, survivors: u32) -> u32 {
        let mapped = match &self.remap {
            Some(r) => r[survivors as usize],
            None => {
                let mut m = 0;
                let mut s = survivors;
                while s != 0 {
                    let b = s.trailing_zeros() as usize;
                    s &= s - 1;
                    if let Some(nb) = self.carry[b] {
                        m |= 1 << nb;
                    }
                }
                m
            }
        };
        mapped | self.arrivals
    }

    /// `F(D', t+1)` for the requests of `D` left unserved.
    fn value(&self, survivors: u32) -> f64 {
        match self.next {
            Some(v) => v[self.next_mask(survivors) as usize],
            None => 0.0,
        }
    }
}

/// An assignment shape: the local bits placed on T1, and `(local bit, class)` for T2.
struct Candidate<'c> {
    t1: u32,
    t2: &'c [(u8, u8)],
}

struct SlotProblem<'a> {
    /// Local bits of the outstanding set, ascending.
    bits: Vec<u8>,
    mask: u32,
    valuation: &'a [f64],
    class_p0: &'a [f64],
    penalty: f64,
    /// `eligible[i][c]`: request `bits[i]` may use T2 class `c`.
    eligible: Vec<Vec<bool>>,
    need_t1: usize,
}

impl<'a> SlotProblem<'a> {
    fn new(mask: u32, valuation: &'a [f64], model: &'a ChannelModel, penalty: f64, prune: bool, g: usize) -> Self {
        let bits: Vec<u8> = (0..32u8).filter(|b| mask >> b & 1 == 1).collect();
        let eligible = bits
            .iter()
            .map(|&b| {
                let w = valuation[b as usize];
                model
                    .class_p0
                    .iter()
                    .map(|&p0| !prune || p0 * w >= penalty * (1.0 - p0))
                    .collect()
            })
            .collect();
        let need_t1 = if prune { g.min(bits.len()) } else { 0 };
        Self { bits, mask, valuation, class_p0: &model.class_p0, penalty, eligible, need_t1 }
    }

    fn value(&self, c: &Candidate<'_>, succ: &Successor<'_>) -> f64 {
        let mut base = 0.0;
        let mut t1 = c.t1;
        while t1 != 0 {
            base += self.valuation[t1.trailing_zeros() as usize];
            t1 &= t1 - 1;
        }
        let m = c.t2.len();
        let mut total = 0.0;
        for outcome in 0u32..1 << m {
            let mut prob = 1.0;
            let mut imm = base;
            let mut served = c.t1;
            for (j, &(bit, class)) in c.t2.iter().enumerate() {
                let p0 = self.class_p0[class as usize];
                if outcome >> j & 1 == 1 {
                    prob *= p0;
                    imm += self.valuation[bit as usize];
                    served |= 1 << bit;
                } else {
                    prob *= 1.0 - p0;
                    imm -= self.penalty;
                }
            }
            if prob == 0.0 {
                continue;
            }
            total += prob * (imm + succ.value(self.mask & !served));
        }
        total
    }

    /// Visits every assignment shape with at most `g` T1 requests and at most
    /// `caps[c]` requests on class `c`.
    fn for_each(&self, g: usize, caps: &mut [u8], visit: &mut dyn FnMut(&Candidate<'_>)) {
        let mut t2 = Vec::with_capacity(caps.iter().map(|&c| c as usize).sum());
        self.dfs(0, 0, 0, g, caps, &mut t2, visit);
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        pos: usize,
        t1: u32,
        t1_used: usize,
        g: usize,
        caps: &mut [u8],
        t2: &mut Vec<(u8, u8)>,
        visit: &mut dyn FnMut(&Candidate<'_>),
    ) {
        if t1_used + (self.bits.len() - pos) < self.need_t1 {
            return;
        }
        if pos == self.bits.len() {
            visit(&Candidate { t1, t2 });
            return;
        }
        let bit = self.bits[pos];
        self.dfs(pos + 1, t1, t1_used, g, caps, t2, visit);
        if t1_used < g {
            self.dfs(pos + 1, t1 | 1 << bit, t1_used + 1, g, caps, t2, visit);
        }
        for c in 0..caps.len() {
            if caps[c] > 0 && self.eligible[pos][c] {
                caps[c] -= 1;
                t2.push((bit, c as u8));
                self.dfs(pos + 1, t1, t1_used, g, caps, t2, visit);
                t2.pop();
                caps[c] += 1;
            }
        }
    }

    fn best_value(&self, g: usize, caps: &[u8], succ: &Successor<'_>) -> f64 {
        let mut caps = caps.to_vec();
        let mut best = f64::NEG_INFINITY;
        self.for_each(g, &mut caps, &mut |c| {
            let v = self.value(c, succ);
            if v > best {
                best = v;
            }
        });
        best
    }
}

/// Conditional decision at one information state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub slot: Slot,
    pub outstanding: Vec<usize>,
    pub idle_t1: Vec<usize>,
    pub sensed_idle_t2: Vec<usize>,
    pub assignment: SlotAssignment,
    /// Expected welfare from this slot on, given the assignment.
    pub value: f64,
}

/// Memoized `F(D, t)` for one instance.
#[derive(Debug, Clone)]
pub struct DpTable {
    inst: Instance,
    options: DpOptions,
    model: ChannelModel,
    layers: Vec<Layer>,
}

/// Builds the table with default options.
pub fn build_table(inst: &Instance) -> Result<DpTable, DpError> {
    DpTable::build(inst, DpOptions::default())
}

impl DpTable {
    pub fn build(inst: &Instance, options: DpOptions) -> Result<Self, DpError> {
        let size = state_space_size(inst);
        if size > options.budget {
            return Err(DpError::BudgetExceeded { size, budget: options.budget });
        }
        let h = inst.horizon();
        let model = ChannelModel::new(inst);
        let mut layers: Vec<Layer> = (1..=h)
            .map(|t| Layer { active: active_set(inst, t, &[]), values: vec![] })
            .collect();
        if let Some(l) = layers.iter().find(|l| l.active.len() > MAX_ACTIVE) {
            return Err(DpError::TooManyActive { active: l.active.len() });
        }
        for t in (1..=h).rev() {
            let idx = t as usize - 1;
            let (head, tail) = layers.split_at_mut(idx + 1);
            let layer = &mut head[idx];
            let succ = Successor::new(&layer.active, tail.first(), true);
            let valuation: Vec<f64> =
                layer.active.iter().map(|&r| inst.request(r).valuation).collect();
            let n = 1usize << layer.active.len();
            layer.values = (0..n as u32)
                .into_par_iter()
                .map(|d| expected_value(d, &valuation, &model, inst.penalty(), options.prune, &succ))
                .collect();
        }
        Ok(Self { inst: inst.clone(), options, model, layers })
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn options(&self) -> DpOptions {
        self.options
    }

    /// `F(D, t)` for a set of request indices; `None` if some request is not active at `t`.
    /// Slot `H+1` is the terminal layer and always yields zero.
    pub fn value(&self, t: Slot, outstanding: &[usize]) -> Option<f64> {
        if t == self.inst.horizon() + 1 {
            return Some(0.0);
        }
        let layer = self.layers.get((t as usize).checked_sub(1)?)?;
        let mask = local_mask(&layer.active, outstanding)?;
        Some(layer.values[mask as usize])
    }

    /// `F(active_set(1), 1)`: optimal expected welfare of the instance.
    pub fn optimal_value(&self) -> f64 {
        self.layers.first().and_then(|l| l.values.last().copied()).unwrap_or(0.0)
    }

    /// Number of stored `(t, D)` entries.
    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every stored entry as `(t, D as request indices, F)`.
    pub fn entries(&self) -> impl Iterator<Item = (Slot, Vec<usize>, f64)> + '_ {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            l.values.iter().enumerate().map(move |(m, &v)| {
                let set = l.active.iter().enumerate().filter(|(j, _)| m >> j & 1 == 1).map(|(_, &r)| r).collect();
                (i as Slot + 1, set, v)
            })
        })
    }

    /// Writes `t,mask,value` rows; `mask` is the hex bitmask over request indices.
    pub fn write_dump<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mask", "value"])?;
        for (t, set, v) in self.entries() {
            w.write_record([t.to_string(), hex_mask(&set), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Best assignment for outstanding set `D` given observed-idle T1 channels
    /// `Γ` and sensed-idle T2 channels `S` at slot `t`.
    ///
    /// Ties within `1e-12` prefer fewer T2 assignments, then the
    /// lexicographically smallest `(request id, channel)` list.
    pub fn step_value(&self, t: Slot, outstanding: &[usize], idle_t1: &[usize], sensed: &[usize]) -> StepDecision {
        let inst = &self.inst;
        let idx = t as usize - 1;
        let layer = &self.layers[idx];
        let mask = local_mask(&layer.active, outstanding).expect("outstanding request not active at slot");
        let succ = Successor::new(&layer.active, self.layers.get(idx + 1), false);
        let valuation: Vec<f64> = layer.active.iter().map(|&r| inst.request(r).valuation).collect();
        let g = idle_t1.len();
        let problem = SlotProblem::new(mask, &valuation, &self.model, inst.penalty(), self.options.prune, g);
        let mut caps = self.model.class_caps(sensed.iter().copied());
        let mut class_channels: Vec<Vec<usize>> = vec![vec![]; caps.len()];
        let mut sorted_sensed = sensed.to_vec();
        sorted_sensed.sort_unstable();
        for &k in &sorted_sensed {
            class_channels[self.model.t2_class[k]].push(k);
        }
        let mut gamma = idle_t1.to_vec();
        gamma.sort_unstable();

        let mut best: Option<(f64, TieKey, SlotAssignment)> = None;
        problem.for_each(g, &mut caps, &mut |c| {
            let v = problem.value(c, &succ);
            let asg = concrete(&layer.active, inst, c, &gamma, &class_channels);
            let key = tie_key(inst, &asg);
            let better = match &best {
                None => true,
                Some((bv, bkey, _)) => {
                    let tol = TIE_TOL * bv.abs().max(1.0);
                    v > bv + tol || ((v - bv).abs() <= tol && key < *bkey)
                }
            };
            if better {
                best = Some((v, key, asg));
            }
        });
        let (value, _, assignment) = best.expect("empty assignment is always a candidate");
        StepDecision {
            slot: t,
            outstanding: outstanding.to_vec(),
            idle_t1: idle_t1.to_vec(),
            sensed_idle_t2: sensed.to_vec(),
            assignment,
            value,
        }
    }
}

impl Policy for DpTable {
    fn assign(&self, view: &SlotView<'_>) -> SlotAssignment {
        self.step_value(view.slot, view.outstanding, view.idle_t1, view.sensed_idle_t2).assignment
    }
}

/// Replays the table's decisions along `path`.
pub fn run_offline(inst: &Instance, path: &SamplePath, table: &DpTable) -> Result<Run, DpError> {
    debug_assert!(table.instance() == inst, "table was built for a different instance");
    Ok(simulate(inst, path, table)?)
}

fn expected_value(d: u32, valuation: &[f64], model: &ChannelModel, penalty: f64, prune: bool, succ: &Successor<'_>) -> f64 {
    let mut memo: HashMap<Vec<u8>, f64> = HashMap::new();
    let mut problems: Vec<Option<SlotProblem<'_>>> = (0..model.t1_count_probs.len()).map(|_| None).collect();
    let mut total = 0.0;
    for &(s, ws) in &model.sensing {
        let caps = model.class_caps((0..32).filter(|k| s >> k & 1 == 1));
        let y = match memo.get(&caps) {
            Some(&y) => y,
            None => {
                let mut y = 0.0;
                for (g, &pg) in model.t1_count_probs.iter().enumerate() {
                    if pg == 0.0 {
                        continue;
                    }
                    let p = problems[g]
                        .get_or_insert_with(|| SlotProblem::new(d, valuation, model, penalty, prune, g));
                    y += pg * p.best_value(g, &caps, succ);
                }
                memo.insert(caps, y);
                y
            }
        };
        total += ws * y;
    }
    total
}

fn local_mask(active: &[usize], set: &[usize]) -> Option<u32> {
    set.iter().try_fold(0u32, |m, r| active.iter().position(|a| a == r).map(|j| m | 1 << j))
}

fn concrete(
    active: &[usize],
    inst: &Instance,
    c: &Candidate<'_>,
    gamma: &[usize],
    class_channels: &[Vec<usize>],
) -> SlotAssignment {
    let by_id = |bits: &mut Vec<usize>| bits.sort_by_key(|&r| inst.request(r).id);
    let mut t1: Vec<usize> = (0..32).filter(|b| c.t1 >> b & 1 == 1).map(|b| active[b]).collect();
    by_id(&mut t1);
    let mut pairs: Vec<(usize, ChannelRef)> =
        t1.into_iter().zip(gamma).map(|(r, &k)| (r, ChannelRef::T1(k))).collect();
    for (class, channels) in class_channels.iter().enumerate() {
        let mut members: Vec<usize> =
            c.t2.iter().filter(|(_, cl)| *cl as usize == class).map(|(b, _)| active[*b as usize]).collect();
        by_id(&mut members);
        pairs.extend(members.into_iter().zip(channels).map(|(r, &k)| (r, ChannelRef::T2(k))));
    }
    SlotAssignment::from_pairs(pairs)
}

/// T2 count, then sorted `(request id, channel)` pairs.
type TieKey = (usize, Vec<(u32, ChannelRef)>);

fn tie_key(inst: &Instance, asg: &SlotAssignment) -> TieKey {
    let mut pairs: Vec<(u32, ChannelRef)> = asg.pairs().iter().map(|&(r, c)| (inst.request(r).id, c)).collect();
    pairs.sort_unstable();
    (asg.t2_count(), pairs)
}

fn hex_mask(set: &[usize]) -> String {
    let words = set.iter().map(|r| r / 64 + 1).max().unwrap_or(1);
    let mut w = vec![0u64; words];
    for &r in set {
        w[r / 64] |= 1 << (r % 64);
    }
    let mut s = format!("{:x}", w[words - 1]);
    for x in w[..words - 1].iter().rev() {
        s.push_str(&format!("{x:016x}"));
    }
    s
}
