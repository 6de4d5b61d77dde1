//! Brute-force ground truth for tiny instances.
//!
//! Nothing here uses the derived channel statistics or the DP table: joint
//! probabilities come straight from `π1`, `π2`, `Pf` and `Pm`, every valid
//! assignment is enumerated, and no pruning is applied.

use std::collections::HashMap;

use crate::error::OracleError;
use crate::model::{active_set, simulate, ChannelRef, Instance, Policy, SamplePath, Slot, SlotAssignment, SlotView};

/// Default cap on the number of enumerated sample paths.
pub const ORACLE_BUDGET: f64 = 1e7;

/// Joint state of one slot: T1 busy flags, T2 busy flags, T2 sensed-busy flags.
#[derive(Debug, Clone)]
struct SlotState {
    prob: f64,
    t1_busy: Vec<bool>,
    t2_busy: Vec<bool>,
    t2_sensed_busy: Vec<bool>,
}

/// Probability of (true state, sensed state) for one T2 channel.
fn t2_joint(inst: &Instance, k: usize, busy: bool, sensed_busy: bool) -> f64 {
    let c = &inst.t2()[k];
    match (busy, sensed_busy) {
        (false, false) => c.idle_prob * (1.0 - c.false_alarm),
        (false, true) => c.idle_prob * c.false_alarm,
        (true, false) => (1.0 - c.idle_prob) * c.misdetection,
        (true, true) => (1.0 - c.idle_prob) * (1.0 - c.misdetection),
    }
}

fn t1_prob(inst: &Instance, k: usize, busy: bool) -> f64 {
    let p = inst.t1()[k].idle_prob;
    if busy {
        1.0 - p
    } else {
        p
    }
}

fn slot_states(inst: &Instance) -> Vec<SlotState> {
    let n1 = inst.t1().len();
    let n2 = inst.t2().len();
    let mut out = Vec::with_capacity(1 << (n1 + 2 * n2));
    for code in 0u64..1 << (n1 + 2 * n2) {
        let bit = |i: usize| code >> i & 1 == 1;
        let t1_busy: Vec<bool> = (0..n1).map(bit).collect();
        let t2_busy: Vec<bool> = (0..n2).map(|k| bit(n1 + 2 * k)).collect();
        let t2_sensed_busy: Vec<bool> = (0..n2).map(|k| bit(n1 + 2 * k + 1)).collect();
        let prob = (0..n1).map(|k| t1_prob(inst, k, t1_busy[k])).product::<f64>()
            * (0..n2).map(|k| t2_joint(inst, k, t2_busy[k], t2_sensed_busy[k])).product::<f64>();
        out.push(SlotState { prob, t1_busy, t2_busy, t2_sensed_busy });
    }
    out
}

/// Number of joint realizations of all channel states over the horizon.
pub fn realization_count(inst: &Instance) -> f64 {
    2f64.powi((inst.t1().len() + 2 * inst.t2().len()) as i32).powi(inst.horizon() as i32)
}

/// Calls `f(probability, path)` for every joint realization over the horizon.
pub fn for_each_realization(
    inst: &Instance,
    budget: f64,
    mut f: impl FnMut(f64, &SamplePath),
) -> Result<(), OracleError> {
    let size = realization_count(inst);
    if size > budget {
        return Err(OracleError::BudgetExceeded { size, budget });
    }
    let states = slot_states(inst);
    let h = inst.horizon() as usize;
    let mut digits = vec![0usize; h];
    loop {
        let prob: f64 = digits.iter().map(|&d| states[d].prob).product();
        let path = SamplePath::from_parts(
            digits.iter().map(|&d| states[d].t1_busy.clone()).collect(),
            digits.iter().map(|&d| states[d].t2_busy.clone()).collect(),
            digits.iter().map(|&d| states[d].t2_sensed_busy.clone()).collect(),
        )?;
        f(prob, &path);
        let mut i = 0;
        loop {
            if i == h {
                return Ok(());
            }
            digits[i] += 1;
            if digits[i] < states.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Exact expected welfare of `policy`: probability-weighted welfare over
/// every joint realization.
pub fn exact_expected_welfare<P: Policy + ?Sized>(inst: &Instance, policy: &P) -> Result<f64, OracleError> {
    let mut total = 0.0;
    let mut err = None;
    for_each_realization(inst, ORACLE_BUDGET, |p, path| {
        if err.is_some() || p == 0.0 {
            return;
        }
        match simulate(inst, path, policy) {
            Ok(run) => total += p * run.outcome.welfare,
            Err(e) => err = Some(e),
        }
    })?;
    match err {
        Some(e) => Err(e.into()),
        None => Ok(total),
    }
}

/// Sum of realization probabilities; one up to rounding.
pub fn total_probability(inst: &Instance) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for_each_realization(inst, ORACLE_BUDGET, |p, _| total += p)?;
    Ok(total)
}

/// Every injective partial map from `outstanding` to the available channels,
/// starting with the empty assignment.
pub fn valid_assignments(outstanding: &[usize], idle_t1: &[usize], sensed_idle_t2: &[usize]) -> Vec<SlotAssignment> {
    let channels: Vec<ChannelRef> = idle_t1
        .iter()
        .map(|&k| ChannelRef::T1(k))
        .chain(sensed_idle_t2.iter().map(|&k| ChannelRef::T2(k)))
        .collect();
    let mut out = Vec::new();
    let mut used = vec![false; channels.len()];
    let mut cur = Vec::new();
    fn rec(
        pos: usize,
        reqs: &[usize],
        channels: &[ChannelRef],
        used: &mut [bool],
        cur: &mut Vec<(usize, ChannelRef)>,
        out: &mut Vec<SlotAssignment>,
    ) {
        if pos == reqs.len() {
            out.push(SlotAssignment::from_pairs(cur.clone()));
            return;
        }
        rec(pos + 1, reqs, channels, used, cur, out);
        for c in 0..channels.len() {
            if !used[c] {
                used[c] = true;
                cur.push((reqs[pos], channels[c]));
                rec(pos + 1, reqs, channels, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
    }
    rec(0, outstanding, &channels, &mut used, &mut cur, &mut out);
    out
}

fn check_guard(inst: &Instance) -> Result<(), OracleError> {
    let (h, c, n) = (inst.horizon(), inst.channel_count(), inst.requests().len());
    if h > 3 || c > 2 || n > 3 {
        return Err(OracleError::Guard { horizon: h, channels: c, requests: n });
    }
    Ok(())
}

/// Optimal expected welfare over all deterministic policies, for instances
/// with `H ≤ 3`, `C ≤ 2`, `N ≤ 3`.
///
/// Computed by expectimax over the information-state tree: a chance node
/// for the observed T1 states and sensed T2 states, a max node over every
/// valid assignment, then a chance node for the true T2 states. Subtrees are
/// shared by `(slot, served set)`, which is all the future depends on.
pub fn exhaustive_optimal(inst: &Instance) -> Result<f64, OracleError> {
    check_guard(inst)?;
    let states = slot_states(inst);
    let mut memo = HashMap::new();
    Ok(expectimax(inst, &states, 1, 0, &mut memo))
}

/// Observed T1 states and sensed T2 states of one slot.
type Observation = (Vec<bool>, Vec<bool>);

fn expectimax(inst: &Instance, states: &[SlotState], t: Slot, served: u32, memo: &mut HashMap<(Slot, u32), f64>) -> f64 {
    if t > inst.horizon() {
        return 0.0;
    }
    if let Some(&v) = memo.get(&(t, served)) {
        return v;
    }
    let flags: Vec<bool> = (0..inst.requests().len()).map(|i| served >> i & 1 == 1).collect();
    let outstanding = active_set(inst, t, &flags);
    // group joint slot states by what the scheduler observes
    let mut by_obs: Vec<(Observation, Vec<&SlotState>)> = Vec::new();
    for s in states {
        let key = (s.t1_busy.clone(), s.t2_sensed_busy.clone());
        match by_obs.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(s),
            None => by_obs.push((key, vec![s])),
        }
    }
    let mut total = 0.0;
    for ((t1_busy, sensed_busy), group) in &by_obs {
        let idle_t1: Vec<usize> = (0..t1_busy.len()).filter(|&k| !t1_busy[k]).collect();
        let sensed: Vec<usize> = (0..sensed_busy.len()).filter(|&k| !sensed_busy[k]).collect();
        let mut best = f64::NEG_INFINITY;
        for asg in valid_assignments(&outstanding, &idle_t1, &sensed) {
            let mut v = 0.0;
            for s in group {
                if s.prob == 0.0 {
                    continue;
                }
                let mut imm = 0.0;
                let mut next = served;
                for &(r, ch) in asg.pairs() {
                    let ok = match ch {
                        ChannelRef::T1(_) => true,
                        ChannelRef::T2(k) => !s.t2_busy[k],
                    };
                    if ok {
                        imm += inst.request(r).valuation;
                        next |= 1 << r;
                    } else {
                        imm -= inst.penalty();
                    }
                }
                v += s.prob * (imm + expectimax(inst, states, t + 1, next, memo));
            }
            best = best.max(v);
        }
        total += best;
    }
    memo.insert((t, served), total);
    total
}

/// Information-state key: slot, outstanding set, idle T1 set, sensed-idle T2 set.
pub type InfoKey = (Slot, u64, u64, u64);

fn bits(xs: &[usize]) -> u64 {
    xs.iter().fold(0, |m, &x| m | 1 << x)
}

pub fn info_key(view: &SlotView<'_>) -> InfoKey {
    (view.slot, bits(view.outstanding), bits(view.idle_t1), bits(view.sensed_idle_t2))
}

/// A deterministic policy given as a lookup table; unknown states get the empty assignment.
#[derive(Debug, Clone, Default)]
pub struct TablePolicy {
    pub choices: HashMap<InfoKey, SlotAssignment>,
}

impl Policy for TablePolicy {
    fn assign(&self, view: &SlotView<'_>) -> SlotAssignment {
        self.choices.get(&info_key(view)).cloned().unwrap_or_default()
    }
}

/// A fixed pseudo-random deterministic policy: each information state maps
/// to a valid assignment chosen by hashing the state with `seed`.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub seed: u64,
}

impl Policy for RandomPolicy {
    fn assign(&self, view: &SlotView<'_>) -> SlotAssignment {
        let options = valid_assignments(view.outstanding, view.idle_t1, view.sensed_idle_t2);
        let (t, a, b, c) = info_key(view);
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for x in [t as u64, a, b, c] {
            h = splitmix(h ^ x);
        }
        options[(h % options.len() as u64) as usize].clone()
    }
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Literal maximum over every deterministic information-state policy.
/// Only feasible for micro instances; refuses beyond `max_policies`.
pub fn policy_enumeration_optimal(inst: &Instance, max_policies: f64) -> Result<f64, OracleError> {
    check_guard(inst)?;
    let n1 = inst.t1().len();
    let n2 = inst.t2().len();
    let mut decision_states: Vec<(InfoKey, Vec<SlotAssignment>)> = Vec::new();
    for t in 1..=inst.horizon() {
        let active = active_set(inst, t, &[]);
        for sub in 1u32..1 << active.len() {
            let outstanding: Vec<usize> = (0..active.len()).filter(|j| sub >> j & 1 == 1).map(|j| active[j]).collect();
            for g in 0u32..1 << n1 {
                for s in 0u32..1 << n2 {
                    let idle_t1: Vec<usize> = (0..n1).filter(|k| g >> k & 1 == 1).collect();
                    let sensed: Vec<usize> = (0..n2).filter(|k| s >> k & 1 == 1).collect();
                    let options = valid_assignments(&outstanding, &idle_t1, &sensed);
                    if options.len() > 1 {
                        decision_states.push(((t, bits(&outstanding), bits(&idle_t1), bits(&sensed)), options));
                    }
                }
            }
        }
    }
    let count: f64 = decision_states.iter().map(|(_, o)| o.len() as f64).product();
    if count > max_policies {
        return Err(OracleError::BudgetExceeded { size: count, budget: max_policies });
    }
    let mut digits = vec![0usize; decision_states.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let policy = TablePolicy {
            choices: decision_states.iter().zip(&digits).map(|((k, o), &d)| (*k, o[d].clone())).collect(),
        };
        best = best.max(exact_expected_welfare(inst, &policy)?);
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(best);
            }
            digits[i] += 1;
            if digits[i] < decision_states[i].1.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
