use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crnalloc::auction::{reservation_q0, reservation_q1, run_auction, Reservation};
use crnalloc::config::{load_experiment, InstanceConfig};
use crnalloc::harness::{outcome_record, run_sweep, Algo, CSV_HEADER};
use crnalloc::model::{sample_path, Instance};
use crnalloc::offline_dp::{run_offline, state_space_size, DpOptions, DpTable, BUDGET_ENV};
use crnalloc::online_greedy::{run_online, GreedyConfig};
use crnalloc::oracle::{exact_expected_welfare, exhaustive_optimal};

#[derive(Parser)]
#[command(name = "crnalloc", version, about = "Spectrum sensing and allocation simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Instance config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sample paths; overrides the config.
    #[arg(long)]
    realizations: Option<usize>,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Budget {
    /// Refuse DP tables larger than this (3^|T2| * 2^|T1| * 2^r * H).
    #[arg(long, env = BUDGET_ENV)]
    budget: Option<f64>,
}

impl Budget {
    fn options(&self) -> DpOptions {
        let mut o = DpOptions::default();
        if let Some(b) = self.budget {
            o.budget = b;
        }
        o
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run offline, online and auction schedulers on sampled paths.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: Budget,
        /// Auction reservation price: a number, `cost`, `auto-q0` or `auto-q1`.
        #[arg(long, default_value = "cost")]
        reservation: Reservation,
        /// Charge the auction reservation price on T1 channels too.
        #[arg(long)]
        t1_reservation: bool,
    },
    /// Print derived channel statistics and the reservation prices q0 and q1.
    Derive {
        #[arg(long)]
        config: PathBuf,
    },
    /// Optimal offline scheduler.
    Offline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: Budget,
        /// Write the value table as CSV rows `t,mask,value`.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Greedy online scheduler.
    Online {
        #[command(flatten)]
        common: Common,
        /// Reservation prices: a number, `cost`, `auto-q0` or `auto-q1`.
        #[arg(long, default_value = "cost")]
        theta: Reservation,
    },
    /// Greedy allocation with critical-price payments.
    Auction {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cost")]
        reservation: Reservation,
        /// Charge the reservation price on T1 channels too.
        #[arg(long)]
        t1_reservation: bool,
        /// Write payments as CSV rows `realization,bidder,payment,served_slot`.
        #[arg(long)]
        payments: Option<PathBuf>,
    },
    /// Run an experiment spec (TOML) and write the summary CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
        #[command(flatten)]
        budget: Budget,
        /// Skip the offline baseline.
        #[arg(long)]
        no_offline: bool,
    },
    /// Compare the DP optimum with brute-force enumeration on a tiny instance.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

struct Loaded {
    inst: Instance,
    seed: u64,
    realizations: usize,
}

fn load(common: &Common) -> Result<Loaded> {
    let cfg = InstanceConfig::load(&common.config)?;
    Ok(Loaded {
        inst: cfg.instance()?,
        seed: common.seed.unwrap_or(cfg.seed),
        realizations: common.realizations.unwrap_or(cfg.realizations),
    })
}

/// Path seeds are consecutive from the base seed.
fn path_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

fn build_table(inst: &Instance, budget: &Budget) -> Result<DpTable> {
    let table = DpTable::build(inst, budget.options())?;
    eprintln!("F(D,1) = {}", table.optimal_value());
    Ok(table)
}

fn auction_config(inst: &Instance, reservation: Reservation, t1: bool) -> Result<GreedyConfig> {
    Ok(if t1 { reservation.config_with_t1(inst)? } else { reservation.config(inst)? })
}

fn simulate(common: &Common, budget: &Budget, reservation: Reservation, t1: bool) -> Result<()> {
    let l = load(common)?;
    let table = match build_table(&l.inst, budget) {
        Ok(t) => Some(t),
        Err(e) => {
            eprintln!("offline baseline unavailable: {e}");
            None
        }
    };
    let online = Reservation::CostBased.config(&l.inst)?;
    let auction = auction_config(&l.inst, reservation, t1)?;
    let mut w = csv::Writer::from_writer(output(&common.out)?);
    w.write_record(CSV_HEADER)?;
    for r in 0..l.realizations {
        let path = sample_path(&l.inst, path_seed(l.seed, r));
        if let Some(t) = &table {
            w.write_record(outcome_record(r, Algo::Offline, &run_offline(&l.inst, &path, t)?.outcome, l.seed))?;
        }
        w.write_record(outcome_record(r, Algo::Online, &run_online(&l.inst, &path, &online)?.outcome, l.seed))?;
        w.write_record(outcome_record(r, Algo::Auction, &run_auction(&l.inst, &path, &auction)?.outcome, l.seed))?;
    }
    w.flush()?;
    Ok(())
}

fn derive(config: &PathBuf) -> Result<()> {
    let inst = InstanceConfig::load(config)?.instance()?;
    println!("penalty Q = {}", inst.penalty());
    for (k, c) in inst.t1().iter().enumerate() {
        println!("T1[{k}] pi1={}", c.idle_prob);
    }
    for (k, (c, s)) in inst.t2().iter().zip(inst.t2_stats()).enumerate() {
        let p0 = s.idle_given_sensed.map_or("undefined".to_string(), |p| format!("{p:.6}"));
        println!(
            "T2[{k}] pi2={} pf={} pm={} P_I={:.6} P_0={p0} cost={:.6}",
            c.idle_prob, c.false_alarm, c.misdetection, s.sensed_idle, s.cost
        );
    }
    match reservation_q0(&inst) {
        Ok(q) => println!("q0 = {q:.6}"),
        Err(e) => println!("q0 unavailable: {e}"),
    }
    match reservation_q1(&inst) {
        Ok(q) => println!("q1 = {q:.6}"),
        Err(e) => println!("q1 unavailable: {e}"),
    }
    Ok(())
}

fn offline(common: &Common, budget: &Budget, dump: &Option<PathBuf>) -> Result<()> {
    let l = load(common)?;
    eprintln!("state space size = {:.3e}", state_space_size(&l.inst));
    let table = build_table(&l.inst, budget)?;
    if let Some(p) = dump {
        table.write_dump(File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    let mut w = csv::Writer::from_writer(output(&common.out)?);
    w.write_record(CSV_HEADER)?;
    for r in 0..l.realizations {
        let path = sample_path(&l.inst, path_seed(l.seed, r));
        w.write_record(outcome_record(r, Algo::Offline, &run_offline(&l.inst, &path, &table)?.outcome, l.seed))?;
    }
    w.flush()?;
    Ok(())
}

fn online(common: &Common, theta: Reservation) -> Result<()> {
    let l = load(common)?;
    let cfg = theta.config(&l.inst)?;
    let mut w = csv::Writer::from_writer(output(&common.out)?);
    w.write_record(CSV_HEADER)?;
    for r in 0..l.realizations {
        let path = sample_path(&l.inst, path_seed(l.seed, r));
        w.write_record(outcome_record(r, Algo::Online, &run_online(&l.inst, &path, &cfg)?.outcome, l.seed))?;
    }
    w.flush()?;
    Ok(())
}

fn auction(common: &Common, reservation: Reservation, t1: bool, payments: &Option<PathBuf>) -> Result<()> {
    let l = load(common)?;
    let cfg = auction_config(&l.inst, reservation, t1)?;
    let mut w = csv::Writer::from_writer(output(&common.out)?);
    let mut pay = match payments {
        Some(p) => {
            let mut pw = csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
            pw.write_record(["realization", "bidder", "payment", "served_slot"])?;
            Some(pw)
        }
        None => None,
    };
    w.write_record(CSV_HEADER)?;
    for r in 0..l.realizations {
        let path = sample_path(&l.inst, path_seed(l.seed, r));
        let outcome = run_auction(&l.inst, &path, &cfg)?.outcome;
        w.write_record(outcome_record(r, Algo::Auction, &outcome, l.seed))?;
        if let Some(pw) = pay.as_mut() {
            for (bidder, p) in &outcome.payments {
                pw.write_record([r.to_string(), bidder.to_string(), p.amount.to_string(), p.served_slot.to_string()])?;
            }
        }
    }
    w.flush()?;
    if let Some(mut pw) = pay {
        pw.flush()?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    spec: &PathBuf,
    out: &Option<PathBuf>,
    seed: Option<u64>,
    groups: Option<usize>,
    realizations: Option<usize>,
    budget: &Budget,
    no_offline: bool,
) -> Result<()> {
    let mut s = load_experiment(spec)?;
    if let Some(x) = seed {
        s.seed = x;
    }
    if let Some(x) = groups {
        s.groups = x;
    }
    if let Some(x) = realizations {
        s.realizations = x;
    }
    if budget.budget.is_some() {
        s.dp_budget = budget.budget;
    }
    if no_offline {
        s.offline = false;
    }
    let report = run_sweep(&s)?;
    for p in &report.points {
        if let Some(e) = &p.offline_error {
            if s.offline {
                eprintln!("{}={}: offline baseline unavailable: {e}", p.sweep_var, p.value);
            }
        }
    }
    report.write_csv(output(out)?)?;
    Ok(())
}

fn oracle_check(config: &PathBuf) -> Result<bool> {
    let inst = InstanceConfig::load(config)?.instance()?;
    let brute = exhaustive_optimal(&inst)?;
    let table = DpTable::build(&inst, DpOptions::default())?;
    let dp = table.optimal_value();
    let dp_policy = exact_expected_welfare(&inst, &table)?;
    let greedy = exact_expected_welfare(&inst, &Reservation::CostBased.config(&inst)?)?;
    println!("exhaustive optimum      = {brute:.12}");
    println!("dp value                = {dp:.12}");
    println!("dp policy (enumerated)  = {dp_policy:.12}");
    println!("greedy (enumerated)     = {greedy:.12}");
    let ok = (brute - dp).abs() <= 1e-9 && (brute - dp_policy).abs() <= 1e-9;
    println!("{}", if ok { "match" } else { "MISMATCH" });
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Simulate { common, budget, reservation, t1_reservation } => {
            simulate(common, budget, *reservation, *t1_reservation)
        }
        Cmd::Derive { config } => derive(config),
        Cmd::Offline { common, budget, dump } => offline(common, budget, dump),
        Cmd::Online { common, theta } => online(common, *theta),
        Cmd::Auction { common, reservation, t1_reservation, payments } => {
            auction(common, *reservation, *t1_reservation, payments)
        }
        Cmd::Sweep { spec, out, seed, groups, realizations, budget, no_offline } => {
            sweep(spec, out, *seed, *groups, *realizations, budget, *no_offline)
        }
        Cmd::OracleCheck { config } => match oracle_check(config) {
            Ok(true) => Ok(()),
            Ok(false) => Err(anyhow::anyhow!("DP value differs from the exhaustive optimum")),
            Err(e) => Err(e),
        },
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
