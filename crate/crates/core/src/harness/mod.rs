//! Experiment runner: random request groups, channel realizations, parameter
//! sweeps and CSV summaries comparing the offline, online and auction
//! schedulers.

mod stats;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{ratio_of_means, summarize, Summary};

use crate::auction::{run_auction, Reservation};
use crate::error::HarnessError;
use crate::model::{sample_path, DeadlineMode, Instance, Outcome, Request, Slot, T1Channel, T2Channel};
use crate::offline_dp::{run_offline, DpOptions, DpTable};
use crate::online_greedy::run_online;
use crate::oracle::splitmix;

/// Exact CSV header written by [`SweepReport::write_csv`].
pub const CSV_HEADER: [&str; 11] = [
    "sweep_var",
    "value",
    "algo",
    "mean_welfare",
    "se_welfare",
    "mean_revenue",
    "se_revenue",
    "mean_collisions",
    "mean_served",
    "ratio_to_offline",
    "seed_base",
];

/// Parameters of the random request generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestGen {
    pub count: usize,
    pub inter_arrival_mean: f64,
    pub duration_mean: f64,
    pub valuation_lo: f64,
    pub valuation_hi: f64,
}

impl Default for RequestGen {
    fn default() -> Self {
        Self { count: 20, inter_arrival_mean: 3.0, duration_mean: 10.0, valuation_lo: 1.0, valuation_hi: 15.0 }
    }
}

impl RequestGen {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Spec(m.to_string()));
        if !(self.inter_arrival_mean.is_finite() && self.inter_arrival_mean > 0.0) {
            return bad("inter-arrival mean must be positive");
        }
        if !(self.duration_mean.is_finite() && self.duration_mean >= 0.0) {
            return bad("duration mean must be nonnegative");
        }
        if !(self.valuation_lo.is_finite() && self.valuation_hi.is_finite() && self.valuation_lo <= self.valuation_hi) {
            return bad("valuation range must be finite and nonempty");
        }
        Ok(())
    }
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(tag)))
}

/// Draws a request group.
///
/// Arrivals are the ceilings of a Poisson process with the given
/// inter-arrival mean (so several requests may share a slot), clamped to
/// slot 1. Window lengths are `ceil(Exp(duration mean))`, at least one slot.
/// Arrivals, durations and valuations use independent streams, so changing
/// one parameter leaves the other draws unchanged.
pub fn generate_requests(gen: &RequestGen, mode: DeadlineMode, seed: u64) -> Vec<Request> {
    let mut arr = stream(seed, 1);
    let mut dur = stream(seed, 2);
    let mut val = stream(seed, 3);
    let mut clock = 0.0;
    (0..gen.count)
        .map(|i| {
            clock += gen.inter_arrival_mean * arr.sample::<f64, _>(Exp1);
            let a = (clock.ceil() as Slot).max(1);
            let len = ((gen.duration_mean * dur.sample::<f64, _>(Exp1)).ceil() as Slot).max(1);
            let w = val.random_range(gen.valuation_lo..=gen.valuation_hi);
            let d = match mode {
                DeadlineMode::Exclusive => a + len,
                DeadlineMode::Inclusive => a + len - 1,
            };
            Request::new(i as u32, a, d, w)
        })
        .collect()
}

/// Channel configuration shared by every request group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSetup {
    #[serde(default)]
    pub t1: Vec<T1Channel>,
    #[serde(default)]
    pub t2: Vec<T2Channel>,
    #[serde(alias = "Q")]
    pub penalty: f64,
}

/// Three identical T2 channels (`π2 = 0.6324`, `Pf = 0.6595`, `Pm = 0.2218`).
pub fn homogeneous_t2() -> Vec<T2Channel> {
    vec![T2Channel { idle_prob: 0.6324, false_alarm: 0.6595, misdetection: 0.2218 }; 3]
}

/// Three T2 channels of very different quality.
pub fn heterogeneous_t2() -> Vec<T2Channel> {
    vec![
        T2Channel { idle_prob: 0.9134, false_alarm: 0.7922, misdetection: 0.1419 },
        T2Channel { idle_prob: 0.6324, false_alarm: 0.6595, misdetection: 0.2218 },
        T2Channel { idle_prob: 0.0975, false_alarm: 0.2157, misdetection: 0.6557 },
    ]
}

/// T1 configurations with zero, one and two channels.
pub fn t1_sets() -> Vec<Vec<T1Channel>> {
    vec![
        vec![],
        vec![T1Channel { idle_prob: 0.5058 }],
        vec![T1Channel { idle_prob: 0.8147 }, T1Channel { idle_prob: 0.1270 }],
    ]
}

/// The swept parameter and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "var", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    /// A single point using the spec as given.
    None,
    DurationMean(Vec<f64>),
    /// Flat auction reservation prices.
    Reservation(Vec<f64>),
    /// Idle probabilities of the T1 channels at each point.
    #[serde(alias = "t1_count")]
    T1Sets(Vec<Vec<f64>>),
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::DurationMean(_) => "duration_mean",
            Sweep::Reservation(_) => "reservation",
            Sweep::T1Sets(_) => "t1_count",
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_online() -> Reservation {
    Reservation::CostBased
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub channels: ChannelSetup,
    #[serde(default)]
    pub requests: RequestGen,
    pub groups: usize,
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Compute the offline optimum (the expensive part).
    #[serde(default = "default_true")]
    pub offline: bool,
    /// Run the auction (critical prices need many replays).
    #[serde(default = "default_true")]
    pub auction: bool,
    /// Reservation prices of the online scheduler.
    #[serde(default = "default_online")]
    pub online_theta: Reservation,
    /// Reservation prices of the auction.
    #[serde(default = "default_online")]
    pub auction_reservation: Reservation,
    /// Apply the auction reservation price to T1 channels as well.
    #[serde(default)]
    pub t1_reservation: bool,
    #[serde(default = "sweep_none")]
    pub sweep: Sweep,
    /// Overrides the default DP budget.
    #[serde(default)]
    pub dp_budget: Option<f64>,
    #[serde(default)]
    pub deadline: DeadlineMode,
}

fn sweep_none() -> Sweep {
    Sweep::None
}

impl ExperimentSpec {
    pub fn new(channels: ChannelSetup, requests: RequestGen, groups: usize, realizations: usize, seed: u64) -> Self {
        Self {
            channels,
            requests,
            groups,
            realizations,
            seed,
            offline: true,
            auction: true,
            online_theta: Reservation::CostBased,
            auction_reservation: Reservation::CostBased,
            t1_reservation: false,
            sweep: Sweep::None,
            dp_budget: None,
            deadline: DeadlineMode::Exclusive,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.groups == 0 || self.realizations == 0 {
            return Err(HarnessError::Spec("groups and realizations must be at least 1".into()));
        }
        self.requests.validate()?;
        match &self.sweep {
            Sweep::DurationMean(v) | Sweep::Reservation(v) if v.is_empty() => {
                Err(HarnessError::Spec("sweep has no values".into()))
            }
            Sweep::T1Sets(v) if v.is_empty() => Err(HarnessError::Spec("sweep has no values".into())),
            _ => Ok(()),
        }
    }

    fn points(&self) -> Vec<Point> {
        let base = Point {
            value: 0.0,
            channels: self.channels.clone(),
            requests: self.requests,
            auction: self.auction_reservation,
        };
        match &self.sweep {
            Sweep::None => vec![base],
            Sweep::DurationMean(v) => v
                .iter()
                .map(|&m| Point { value: m, requests: RequestGen { duration_mean: m, ..self.requests }, ..base.clone() })
                .collect(),
            Sweep::Reservation(v) => {
                v.iter().map(|&q| Point { value: q, auction: Reservation::Flat(q), ..base.clone() }).collect()
            }
            Sweep::T1Sets(v) => v
                .iter()
                .map(|set| Point {
                    value: set.len() as f64,
                    channels: ChannelSetup {
                        t1: set.iter().map(|&p| T1Channel { idle_prob: p }).collect(),
                        ..self.channels.clone()
                    },
                    ..base.clone()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Point {
    value: f64,
    channels: ChannelSetup,
    requests: RequestGen,
    auction: Reservation,
}

/// Seed of request group `group`; shared by every sweep point.
pub fn group_seed(base: u64, group: usize) -> u64 {
    splitmix(splitmix(base) ^ group as u64)
}

/// Seed of channel realization `r` of group `group`; shared by every sweep point.
pub fn path_seed(base: u64, group: usize, r: usize) -> u64 {
    splitmix(group_seed(base, group) ^ splitmix(0x5eed ^ r as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Offline,
    Online,
    Auction,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Offline => "offline",
            Algo::Online => "online",
            Algo::Auction => "auction",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Metrics {
    welfare: f64,
    revenue: f64,
    collisions: f64,
    served: f64,
}

fn mean_metrics(runs: &[Metrics]) -> Metrics {
    let k = 1.0 / runs.len() as f64;
    runs.iter().fold(Metrics::default(), |acc, m| Metrics {
        welfare: acc.welfare + k * m.welfare,
        revenue: acc.revenue + k * m.revenue,
        collisions: acc.collisions + k * m.collisions,
        served: acc.served + k * m.served,
    })
}

/// Per-realization metrics of one request group at one sweep point.
struct GroupResult {
    offline: Result<Vec<Metrics>, String>,
    online: Vec<Metrics>,
    auction: Vec<Metrics>,
}

fn run_group(spec: &ExperimentSpec, point: &Point, group: usize) -> Result<GroupResult, HarnessError> {
    let reqs = generate_requests(&point.requests, spec.deadline, group_seed(spec.seed, group));
    let horizon = reqs.iter().map(|r| r.deadline).max().unwrap_or(1).max(1);
    let ch = &point.channels;
    let inst = Instance::with_horizon(reqs, ch.t1.clone(), ch.t2.clone(), ch.penalty, horizon, spec.deadline)?;
    let online_cfg = spec.online_theta.config(&inst)?;
    let auction_cfg =
        if spec.t1_reservation { point.auction.config_with_t1(&inst)? } else { point.auction.config(&inst)? };
    let table = if spec.offline {
        let mut opts = DpOptions::default();
        if let Some(b) = spec.dp_budget {
            opts.budget = b;
        }
        Some(DpTable::build(&inst, opts).map_err(|e| e.to_string()))
    } else {
        None
    };

    let (mut off, mut on, mut auc) = (vec![], vec![], vec![]);
    for r in 0..spec.realizations {
        let path = sample_path(&inst, path_seed(spec.seed, group, r));
        if let Some(Ok(table)) = &table {
            let o = run_offline(&inst, &path, table).map_err(|e| HarnessError::Spec(e.to_string()))?.outcome;
            off.push(Metrics {
                welfare: o.welfare,
                revenue: 0.0,
                collisions: o.collision_count() as f64,
                served: o.served_count() as f64,
            });
        }
        let o = run_online(&inst, &path, &online_cfg)?.outcome;
        on.push(Metrics {
            welfare: o.welfare,
            revenue: 0.0,
            collisions: o.collision_count() as f64,
            served: o.served_count() as f64,
        });
        if !spec.auction {
            continue;
        }
        let o = run_auction(&inst, &path, &auction_cfg)?.outcome;
        auc.push(Metrics {
            welfare: o.welfare,
            revenue: o.revenue.unwrap_or(0.0),
            collisions: o.collision_count() as f64,
            served: o.served_count() as f64,
        });
    }
    let offline = match table {
        None => Err("offline baseline disabled".to_string()),
        Some(Err(e)) => Err(e),
        Some(Ok(_)) => Ok(off),
    };
    Ok(GroupResult { offline, online: on, auction: auc })
}

/// Summary of one algorithm at one sweep point. Standard errors are taken
/// over request-group means, since realizations within a group share the
/// same requests; with a single group they are taken over realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoSummary {
    pub algo: Algo,
    pub welfare: Summary,
    pub revenue: Option<Summary>,
    pub collisions: f64,
    pub served: f64,
    /// Ratio of mean welfare to mean offline welfare, with its standard error.
    pub ratio: Option<(f64, f64)>,
    /// Samples behind `welfare`: per-group means, or per-realization values
    /// when there is a single group. Sample `j` of every point comes from the
    /// same requests (and paths), so differences between points can be paired.
    pub welfare_samples: Vec<f64>,
    /// Samples behind `revenue`, paired the same way.
    pub revenue_samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointReport {
    pub sweep_var: &'static str,
    pub value: f64,
    pub offline: Option<AlgoSummary>,
    /// Why the offline baseline is missing, if it is.
    pub offline_error: Option<String>,
    pub online: AlgoSummary,
    /// `None` when the auction is disabled.
    pub auction: Option<AlgoSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub seed: u64,
    pub points: Vec<PointReport>,
}

fn summarize_algo(algo: Algo, groups: &[Metrics], offline: Option<&[f64]>, with_revenue: bool) -> AlgoSummary {
    let w: Vec<f64> = groups.iter().map(|m| m.welfare).collect();
    let rev: Vec<f64> = groups.iter().map(|m| m.revenue).collect();
    let mean = |f: fn(&Metrics) -> f64| groups.iter().map(f).sum::<f64>() / groups.len() as f64;
    AlgoSummary {
        algo,
        welfare: summarize(&w),
        revenue: with_revenue.then(|| summarize(&rev)),
        collisions: mean(|m| m.collisions),
        served: mean(|m| m.served),
        ratio: offline.map(|off| ratio_of_means(&w, off)),
        welfare_samples: w,
        revenue_samples: with_revenue.then_some(rev),
    }
}

/// Runs every (sweep point, request group) job and summarizes each point.
///
/// Requests and channel realizations depend only on the base seed and the
/// group and realization indices, so every sweep point sees the same random
/// draws. Jobs run in parallel and are reduced in job order, so the output
/// does not depend on scheduling.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepReport, HarnessError> {
    spec.validate()?;
    let points = spec.points();
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..spec.groups).map(move |g| (p, g))).collect();
    let results: Vec<GroupResult> =
        jobs.par_iter().map(|&(p, g)| run_group(spec, &points[p], g)).collect::<Result<_, _>>()?;

    let mut out = Vec::with_capacity(points.len());
    for (p, chunk) in results.chunks(spec.groups).enumerate() {
        let offline_err = chunk.iter().find_map(|g| g.offline.as_ref().err().cloned());
        // one sample per group; with a single group, one per realization
        let samples = |runs: &dyn Fn(&GroupResult) -> &[Metrics]| -> Vec<Metrics> {
            if chunk.len() == 1 {
                runs(&chunk[0]).to_vec()
            } else {
                chunk.iter().map(|g| mean_metrics(runs(g))).collect()
            }
        };
        let offline = match offline_err {
            Some(_) => None,
            None => Some(samples(&|g| g.offline.as_deref().unwrap_or(&[]))),
        };
        let online = samples(&|g| &g.online);
        let auction = samples(&|g| &g.auction);
        let off_summary = offline.as_ref().map(|o| {
            let mut s = summarize_algo(Algo::Offline, o, None, false);
            s.ratio = Some((1.0, 0.0));
            s
        });
        let off_w = off_summary.as_ref().map(|s| s.welfare_samples.clone());
        out.push(PointReport {
            sweep_var: spec.sweep.name(),
            value: points[p].value,
            online: summarize_algo(Algo::Online, &online, off_w.as_deref(), false),
            auction: spec.auction.then(|| summarize_algo(Algo::Auction, &auction, off_w.as_deref(), true)),
            offline: off_summary,
            offline_error: offline_err,
        });
    }
    Ok(SweepReport { seed: spec.seed, points: out })
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

impl SweepReport {
    /// One row per (point, algorithm). Missing values are written as `NA`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for p in &self.points {
            let offline_row = match &p.offline {
                Some(s) => row(p, s, self.seed),
                None => {
                    let mut r = vec!["NA".to_string(); CSV_HEADER.len()];
                    r[0] = p.sweep_var.to_string();
                    r[1] = num(p.value);
                    r[2] = Algo::Offline.name().to_string();
                    r[10] = self.seed.to_string();
                    r
                }
            };
            w.write_record(&offline_row)?;
            w.write_record(row(p, &p.online, self.seed))?;
            if let Some(a) = &p.auction {
                w.write_record(row(p, a, self.seed))?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, HarnessError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// A single run as a row of the summary schema: `sweep_var = "realization"`,
/// zero standard errors, and the run's own counts.
pub fn outcome_record(realization: usize, algo: Algo, outcome: &Outcome, seed: u64) -> Vec<String> {
    let zero_se = outcome.revenue.map(|_| 0.0);
    vec![
        "realization".to_string(),
        realization.to_string(),
        algo.name().to_string(),
        num(outcome.welfare),
        "0".to_string(),
        opt(outcome.revenue),
        opt(zero_se),
        outcome.collision_count().to_string(),
        outcome.served_count().to_string(),
        "NA".to_string(),
        seed.to_string(),
    ]
}

fn row(p: &PointReport, s: &AlgoSummary, seed: u64) -> Vec<String> {
    vec![
        p.sweep_var.to_string(),
        num(p.value),
        s.algo.name().to_string(),
        num(s.welfare.mean),
        num(s.welfare.se),
        opt(s.revenue.map(|r| r.mean)),
        opt(s.revenue.map(|r| r.se)),
        num(s.collisions),
        num(s.served),
        opt(s.ratio.map(|r| r.0)),
        seed.to_string(),
    ]
}
