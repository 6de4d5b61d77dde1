//! Property checks over small random instances.

use proptest::prelude::*;

use crnalloc::auction::{run_auction, wins_with, PRICE_TOLERANCE};
use crnalloc::model::{sample_path, ChannelRef, Instance, Request, T1Channel, T2Channel};
use crnalloc::offline_dp::{DpOptions, DpTable};
use crnalloc::online_greedy::{run_online, GreedyConfig};

const Q: f64 = 10.0;
const TOL: f64 = 1e-9;

fn t2_channel() -> impl Strategy<Value = T2Channel> {
    (0.2..1.0f64, 0.0..0.5f64, 0.0..0.5f64).prop_map(|(pi, pf, pm)| T2Channel::new(pi, pf, pm).unwrap())
}

fn requests(max_n: usize, horizon: u32) -> impl Strategy<Value = Vec<Request>> {
    prop::collection::vec((1..=horizon, 1..=horizon, 1.0..15.0f64), 0..=max_n).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (a, len, w))| Request::new(i as u32 + 1, a, a + len, w))
            .collect()
    })
}

fn small_instance() -> impl Strategy<Value = Instance> {
    (
        requests(4, 3),
        prop::collection::vec(0.1..1.0f64, 0..=1),
        prop::collection::vec(t2_channel(), 0..=2),
    )
        .prop_map(|(reqs, t1, t2)| {
            let t1 = t1.into_iter().map(|p| T1Channel::new(p).unwrap()).collect();
            Instance::new(reqs, t1, t2, Q).unwrap()
        })
}

fn subsets<T: Copy>(items: &[T]) -> Vec<Vec<T>> {
    (0..1usize << items.len())
        .map(|m| items.iter().enumerate().filter(|(j, _)| m >> j & 1 == 1).map(|(_, &x)| x).collect())
        .collect()
}

fn unpruned() -> DpOptions {
    DpOptions { prune: false, ..DpOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn value_is_monotone_in_the_outstanding_set(inst in small_instance()) {
        let table = DpTable::build(&inst, DpOptions::default()).unwrap();
        for (t, set, v) in table.entries() {
            prop_assert!(v.is_finite());
            // F(∅, t) still counts requests that arrive after t
            if set.is_empty() && inst.requests().iter().all(|r| r.arrival <= t) {
                prop_assert_eq!(v, 0.0);
            }
            for drop in 0..set.len() {
                let mut smaller = set.clone();
                smaller.remove(drop);
                let w = table.value(t, &smaller).unwrap();
                prop_assert!(w <= v + TOL, "F({smaller:?},{t})={w} > F({set:?},{t})={v}");
            }
        }
        prop_assert_eq!(table.value(inst.horizon() + 1, &[]), Some(0.0));
    }

    #[test]
    fn reordering_t2_channels_leaves_values_unchanged(inst in small_instance()) {
        let mut t2 = inst.t2().to_vec();
        t2.reverse();
        let flipped = Instance::new(inst.requests().to_vec(), inst.t1().to_vec(), t2, Q).unwrap();
        let a = DpTable::build(&inst, DpOptions::default()).unwrap();
        let b = DpTable::build(&flipped, DpOptions::default()).unwrap();
        for ((t, set, x), (_, _, y)) in a.entries().zip(b.entries()) {
            prop_assert!((x - y).abs() <= TOL, "F({set:?},{t}): {x} vs {y}");
        }
    }

    #[test]
    fn pruning_keeps_values(inst in small_instance()) {
        let a = DpTable::build(&inst, DpOptions::default()).unwrap();
        let b = DpTable::build(&inst, unpruned()).unwrap();
        for ((t, set, x), (_, _, y)) in a.entries().zip(b.entries()) {
            prop_assert!((x - y).abs() <= TOL, "F({set:?},{t}): {x} vs {y}");
        }
    }

    /// Every T2 assignment of the unpruned search satisfies `p0·w ≥ Q(1−p0)`.
    #[test]
    fn unpruned_decisions_never_assign_at_a_loss(inst in small_instance()) {
        let table = DpTable::build(&inst, unpruned()).unwrap();
        let t1: Vec<usize> = (0..inst.t1().len()).collect();
        let t2: Vec<usize> = (0..inst.t2().len()).collect();
        for (t, set, _) in table.entries() {
            for gamma in subsets(&t1) {
                for s in subsets(&t2) {
                    let d = table.step_value(t, &set, &gamma, &s);
                    for &(r, ch) in d.assignment.pairs() {
                        if let ChannelRef::T2(k) = ch {
                            let p0 = inst.t2_stats()[k].p0();
                            let w = inst.request(r).valuation;
                            prop_assert!(p0 * w >= Q * (1.0 - p0) - 1e-12, "t={t} r={r} k={k} p0={p0} w={w}");
                        }
                    }
                }
            }
        }
    }

    /// Homogeneous sensed channels and no T1: if some request clears the
    /// cost strictly and a channel is sensed idle, something is assigned.
    #[test]
    fn profitable_request_gets_a_channel(
        reqs in requests(4, 3),
        ch in t2_channel(),
        count in 1usize..=2,
    ) {
        let inst = Instance::new(reqs, vec![], vec![ch; count], Q).unwrap();
        let table = DpTable::build(&inst, DpOptions::default()).unwrap();
        let p0 = inst.t2_stats()[0].p0();
        let t2: Vec<usize> = (0..count).collect();
        for (t, set, _) in table.entries() {
            let profitable = set.iter().any(|&r| p0 * inst.request(r).valuation > Q * (1.0 - p0) + 1e-9);
            if !profitable {
                continue;
            }
            for s in subsets(&t2).into_iter().filter(|s| !s.is_empty()) {
                prop_assert!(!table.step_value(t, &set, &[], &s).assignment.is_empty(), "t={t} D={set:?} S={s:?}");
            }
        }
    }

    #[test]
    fn auction_keeps_allocation_and_charges_at_most_the_value(
        reqs in requests(8, 6),
        t1 in prop::collection::vec(0.1..1.0f64, 0..=1),
        t2 in prop::collection::vec(t2_channel(), 1..=3),
        flat in prop::option::of(0.0..12.0f64),
        t1_priced in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let t1 = t1.into_iter().map(|p| T1Channel::new(p).unwrap()).collect();
        let inst = Instance::new(reqs, t1, t2, Q).unwrap();
        let cfg = match flat {
            Some(q) => GreedyConfig::flat(&inst, q).unwrap(),
            None => GreedyConfig::cost_based(&inst),
        };
        let cfg = match (flat, t1_priced) {
            (Some(q), true) => cfg.with_t1_reservation(q).unwrap(),
            _ => cfg,
        };
        let path = sample_path(&inst, seed);
        let online = run_online(&inst, &path, &cfg).unwrap();
        let auction = run_auction(&inst, &path, &cfg).unwrap();
        prop_assert_eq!(&online.assignments, &auction.assignments);
        prop_assert_eq!(online.outcome.welfare, auction.outcome.welfare);
        let revenue = auction.outcome.revenue.unwrap();
        prop_assert!(revenue <= auction.outcome.welfare + TOL);
        let expected = auction.outcome.total_payments() - Q * auction.outcome.collision_count() as f64;
        prop_assert!((revenue - expected).abs() <= TOL);
        prop_assert_eq!(auction.outcome.payments.len(), auction.outcome.served_count());
        for s in &auction.outcome.services {
            let p = &auction.outcome.payments[&s.request];
            let w = inst.request(s.index).valuation;
            prop_assert!(p.amount >= 0.0 && p.amount <= w + PRICE_TOLERANCE, "request {} pays {} for {w}", s.request, p.amount);
            if let Some(q) = cfg.t1_theta() {
                // every channel now demands w > q, so no winner pays less
                prop_assert!(p.amount >= q, "request {} pays {} under reservation {q}", s.request, p.amount);
            }
            prop_assert_eq!(p.served_slot, s.slot);
            prop_assert_eq!(p.collected_slot, inst.request(s.index).deadline);
        }
    }

    /// A winning bid keeps winning with a higher value or a wider window.
    #[test]
    fn winning_is_monotone_in_the_bid(
        reqs in requests(8, 6),
        t2 in prop::collection::vec(t2_channel(), 1..=2),
        seed in any::<u64>(),
        raise in 0.0..5.0f64,
        earlier in 0u32..3,
        later in 0u32..3,
    ) {
        let inst = Instance::new(reqs, vec![], t2, Q).unwrap();
        let inst = Instance::with_horizon(
            inst.requests().to_vec(), vec![], inst.t2().to_vec(), Q, inst.horizon() + 3, inst.deadline_mode(),
        ).unwrap();
        let cfg = GreedyConfig::cost_based(&inst);
        let path = sample_path(&inst, seed);
        let run = run_online(&inst, &path, &cfg).unwrap();
        for s in &run.outcome.services {
            let r = *inst.request(s.index);
            let bid = Request {
                arrival: r.arrival.saturating_sub(earlier).max(1),
                deadline: r.deadline + later,
                valuation: r.valuation + raise,
                ..r
            };
            prop_assert!(wins_with(&inst, &path, &cfg, s.index, bid).unwrap(), "{r:?} -> {bid:?}");
        }
    }
}
