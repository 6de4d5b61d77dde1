//! Monte Carlo cross-checks against exact enumeration, and sweep output
//! invariants.

use crnalloc::auction::Reservation;
use crnalloc::harness::{
    generate_requests, heterogeneous_t2, homogeneous_t2, run_sweep, summarize, ChannelSetup, ExperimentSpec, RequestGen,
    Sweep, CSV_HEADER,
};
use crnalloc::model::{
    sample_path, simulate, ChannelRef, Instance, Request, SlotAssignment, SlotView, T1Channel, T2Channel,
};
use crnalloc::offline_dp::{run_offline, DpOptions, DpTable};
use crnalloc::online_greedy::{run_online, GreedyConfig};
use crnalloc::oracle::{exact_expected_welfare, exhaustive_optimal, total_probability, RandomPolicy};

const Q: f64 = 10.0;
const SIGMAS: f64 = 3.0;

fn mc_mean(paths: u64, seed: u64, mut welfare: impl FnMut(u64) -> f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..paths).map(|k| welfare(seed + k)).collect();
    let s = summarize(&xs);
    (s.mean, s.se)
}

#[test]
fn one_slot_always_assign_matches_two_branch_sum() {
    let ch = T2Channel::new(0.6324, 0.6595, 0.2218).unwrap();
    let w = 9.0;
    let inst = Instance::new(vec![Request::new(1, 1, 2, w)], vec![], vec![ch], Q).unwrap();
    let always = |v: &SlotView<'_>| match (v.outstanding.first(), v.sensed_idle_t2.first()) {
        (Some(&r), Some(&k)) => SlotAssignment::from_pairs(vec![(r, ChannelRef::T2(k))]),
        _ => SlotAssignment::new(),
    };
    let s = inst.t2_stats()[0];
    let p0 = s.p0();
    let expected = s.sensed_idle * (p0 * w - (1.0 - p0) * Q);
    assert!((exact_expected_welfare(&inst, &always).unwrap() - expected).abs() < 1e-12);
    assert_eq!(exact_expected_welfare(&inst, &|_: &SlotView<'_>| SlotAssignment::new()).unwrap(), 0.0);
}

#[test]
fn greedy_on_two_slots_matches_monte_carlo() {
    let inst = Instance::new(
        vec![Request::new(1, 1, 3, 9.0), Request::new(2, 1, 2, 6.0), Request::new(3, 2, 3, 12.0)],
        vec![T1Channel::new(0.5058).unwrap()],
        vec![heterogeneous_t2()[0]],
        Q,
    )
    .unwrap();
    let cfg = GreedyConfig::cost_based(&inst);
    let exact = exact_expected_welfare(&inst, &cfg).unwrap();
    let (mean, se) = mc_mean(1_000_000, 31, |seed| {
        simulate(&inst, &sample_path(&inst, seed), &cfg).unwrap().outcome.welfare
    });
    assert!((mean - exact).abs() <= SIGMAS * se, "exact {exact}, monte carlo {mean} ± {se}");
}

#[test]
fn realization_probabilities_sum_to_one() {
    let inst = Instance::new(
        vec![Request::new(1, 1, 4, 3.0)],
        vec![T1Channel::new(0.3).unwrap()],
        vec![T2Channel::new(0.7, 0.1, 0.2).unwrap()],
        Q,
    )
    .unwrap();
    assert!((total_probability(&inst).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn optimum_dominates_random_policies_and_matches_the_table() {
    let inst = Instance::new(
        vec![Request::new(1, 1, 3, 8.0), Request::new(2, 2, 3, 14.0), Request::new(3, 1, 2, 5.0)],
        vec![],
        vec![T2Channel::new(0.6324, 0.6595, 0.2218).unwrap(), T2Channel::new(0.8, 0.2, 0.1).unwrap()],
        Q,
    )
    .unwrap();
    let best = exhaustive_optimal(&inst).unwrap();
    let table = DpTable::build(&inst, DpOptions::default()).unwrap();
    assert!((best - table.optimal_value()).abs() < 1e-9);
    assert!((best - exact_expected_welfare(&inst, &table).unwrap()).abs() < 1e-9);
    for seed in 0..50 {
        let v = exact_expected_welfare(&inst, &RandomPolicy { seed }).unwrap();
        assert!(v <= best + 1e-9, "random policy {seed}: {v} > {best}");
    }
}

/// Offline schedules replayed on sampled paths average to the table value.
#[test]
fn offline_replay_averages_to_table_value() {
    let inst = Instance::new(
        vec![Request::new(1, 1, 4, 8.0), Request::new(2, 2, 5, 14.0), Request::new(3, 3, 6, 5.0)],
        vec![],
        homogeneous_t2(),
        Q,
    )
    .unwrap();
    let table = DpTable::build(&inst, DpOptions::default()).unwrap();
    let (mean, se) = mc_mean(200_000, 77, |seed| {
        run_offline(&inst, &sample_path(&inst, seed), &table).unwrap().outcome.welfare
    });
    let f = table.optimal_value();
    assert!((mean - f).abs() <= SIGMAS * se, "table {f}, monte carlo {mean} ± {se}");
}

#[test]
fn online_is_at_least_half_of_offline() {
    let gen = RequestGen { count: 10, ..RequestGen::default() };
    let reqs = generate_requests(&gen, Default::default(), 5);
    let horizon = reqs.iter().map(|r| r.deadline).max().unwrap();
    let inst = Instance::with_horizon(reqs, vec![], homogeneous_t2(), Q, horizon, Default::default()).unwrap();
    let table = DpTable::build(&inst, DpOptions::default()).unwrap();
    let cfg = GreedyConfig::cost_based(&inst);
    let (online, se) =
        mc_mean(10_000, 1, |seed| run_online(&inst, &sample_path(&inst, seed), &cfg).unwrap().outcome.welfare);
    let (offline, _) = mc_mean(10_000, 1, |seed| {
        run_offline(&inst, &sample_path(&inst, seed), &table).unwrap().outcome.welfare
    });
    assert!(online >= 0.5 * offline - SIGMAS * se, "online {online} ± {se}, offline {offline}");
    assert!(online <= table.optimal_value() + SIGMAS * se);
}

fn small_spec() -> ExperimentSpec {
    let channels = ChannelSetup { t1: vec![T1Channel::new(0.5058).unwrap()], t2: heterogeneous_t2(), penalty: Q };
    let gen = RequestGen { count: 8, ..RequestGen::default() };
    let mut spec = ExperimentSpec::new(channels, gen, 4, 5, 123);
    spec.sweep = Sweep::Reservation(vec![0.0, 4.0, 9.0]);
    spec
}

#[test]
fn sweep_csv_is_byte_identical_across_runs() {
    let spec = small_spec();
    let a = run_sweep(&spec).unwrap().to_csv_string().unwrap();
    let b = run_sweep(&spec).unwrap().to_csv_string().unwrap();
    assert_eq!(a, b);
    let mut other = spec.clone();
    other.seed += 1;
    assert_ne!(a, run_sweep(&other).unwrap().to_csv_string().unwrap());
}

#[test]
fn sweep_rows_respect_welfare_bounds() {
    let rep = run_sweep(&small_spec()).unwrap();
    let csv = rep.to_csv_string().unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    for p in &rep.points {
        let a = p.auction.as_ref().unwrap();
        assert!(a.revenue.unwrap().mean <= a.welfare.mean + 1e-9);
        for s in [Some(&p.online), p.auction.as_ref()].into_iter().flatten() {
            let (r, se) = s.ratio.unwrap();
            assert!(r >= 0.0 || s.welfare.mean < 0.0, "{r}");
            assert!(r <= 1.0 + SIGMAS * se, "ratio {r} ± {se}");
        }
    }
    for row in &rows {
        let num = |i: usize| row[i].parse::<f64>().unwrap();
        if &row[2] == "auction" {
            assert!(num(5) <= num(3) + 1e-9, "{row:?}");
        }
        assert_eq!(&row[10], "123");
    }
}

#[test]
fn disabled_auction_and_offline_drop_out_of_the_csv() {
    let mut spec = small_spec();
    spec.auction = false;
    spec.offline = false;
    spec.auction_reservation = Reservation::Flat(1.0);
    let csv = run_sweep(&spec).unwrap().to_csv_string().unwrap();
    let lines: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|l| !l.contains(",auction,")));
    assert!(lines.iter().filter(|l| l.contains(",offline,")).all(|l| l.contains("NA")));
}
