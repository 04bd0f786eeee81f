use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tracerank::graph::{parse_timestamp, FlowParams, Window};
use tracerank::output::to_json;
use tracerank::pipeline::{
    cmd_compare, cmd_compute, cmd_ingest, cmd_query, cmd_rank, cmd_scenario_spam, cmd_sybil,
    ComputeArgs, IngestArgs, QueryArgs, QueryResultOut, RankMethod, RankOptions,
};
use tracerank::retrieval::{QueryFilters, QueryOptions, DEFAULT_DIM};
use tracerank::scenarios::{SpamScenarioParams, VerdictConfig};
use tracerank::solver::{SolverConfig, DEFAULT_ALPHA, DEFAULT_MAX_ITER, DEFAULT_TOL};
use tracerank::{Address, Error};

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tracerank",
    version,
    about = "Seeded reputation ranking over payment graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate payments, seeds, and profiles and store them in canonical form.
    Ingest {
        #[arg(long)]
        payments: PathBuf,
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Drop payments before this instant (RFC 3339 or Unix seconds).
        #[arg(long, value_parser = parse_instant)]
        window_start: Option<i64>,
        /// Drop payments after this instant.
        #[arg(long, value_parser = parse_instant)]
        window_end: Option<i64>,
        #[arg(long, env = "TRACERANK_OUT")]
        out: PathBuf,
    },
    /// Aggregate flows, normalize, and propagate reputation.
    Compute {
        #[arg(long = "in")]
        in_dir: PathBuf,
        /// Defaults to the input directory.
        #[arg(long, env = "TRACERANK_OUT")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Temporal decay rate, per day.
        #[arg(long, default_value_t = tracerank::graph::DEFAULT_LAMBDA)]
        lambda: f64,
        /// Age reference (RFC 3339 or Unix seconds); defaults to the newest payment.
        #[arg(long, value_parser = parse_instant)]
        as_of: Option<i64>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Treat payments newer than --as-of as age 0.
        #[arg(long)]
        clamp_future: bool,
        /// Drop flow entries below this value.
        #[arg(long)]
        prune_below: Option<f64>,
    },
    /// Top addresses by one ranking method.
    Rank {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long, default_value = "tracerank")]
        method: String,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        /// Unweighted adjacency for PageRank.
        #[arg(long)]
        unweighted: bool,
        /// Rank every address, not only services.
        #[arg(long)]
        all: bool,
        /// Accept scores that did not converge.
        #[arg(long)]
        force: bool,
    },
    /// Natural-language service search fused with reputation.
    Query {
        #[arg(long = "in")]
        in_dir: PathBuf,
        text: String,
        #[arg(long, short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        chain: Option<String>,
        #[arg(long = "tag")]
        tags: Vec<String>,
        #[arg(long, value_parser = parse_instant)]
        active_from: Option<i64>,
        #[arg(long, value_parser = parse_instant)]
        active_to: Option<i64>,
        /// Additive reputation floor before fusion.
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
    },
    /// Side-by-side scores and ranks for every method.
    Compare {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        unweighted: bool,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        force: bool,
    },
    /// Score of one address and the seed mass that can reach it.
    Sybil {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long)]
        address: String,
    },
    /// Generate the spam-service economy and its verdict.
    Scenario {
        #[arg(long, env = "TRACERANK_OUT")]
        out: PathBuf,
        /// RNG seed.
        #[arg(long, default_value_t = 402)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        n_spam: usize,
        #[arg(long, default_value_t = 1.0)]
        spam_value: f64,
        /// Payments per spam wallet.
        #[arg(long, default_value_t = 1)]
        spam_repeat: usize,
        #[arg(long, default_value_t = 0.0)]
        spam_seed: f64,
        #[arg(long, default_value_t = 50)]
        n_legit: usize,
        #[arg(long, default_value_t = 5_000.0)]
        legit_total: f64,
        #[arg(long, default_value_t = 0.9)]
        legit_seed: f64,
        #[arg(long, default_value_t = 0.0)]
        legit_spread: f64,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = tracerank::graph::DEFAULT_LAMBDA)]
        lambda: f64,
    },
}

fn parse_instant(raw: &str) -> Result<i64, String> {
    parse_timestamp(raw).ok_or_else(|| format!("{raw:?} is not RFC 3339 or Unix seconds"))
}

fn window(start: Option<i64>, end: Option<i64>) -> Result<Option<Window>, Error> {
    match (start, end) {
        (None, None) => Ok(None),
        (s, e) => Window::new(s.unwrap_or(i64::MIN), e.unwrap_or(i64::MAX)).map(Some),
    }
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<(), Error> {
    print!("{}", to_json(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Ingest {
            payments,
            seeds,
            profiles,
            window_start,
            window_end,
            out,
        } => {
            let outcome = cmd_ingest(&IngestArgs {
                payments,
                seeds,
                profiles,
                window: window(window_start, window_end)?,
                out_dir: out,
            })?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&outcome.summary)?;
            Ok(0)
        }
        Command::Compute {
            in_dir,
            out,
            alpha,
            lambda,
            as_of,
            tol,
            max_iter,
            clamp_future,
            prune_below,
        } => {
            let outcome = cmd_compute(&ComputeArgs {
                out_dir: out.unwrap_or_else(|| in_dir.clone()),
                in_dir,
                solver: SolverConfig {
                    alpha,
                    tol,
                    max_iter,
                },
                flows: FlowParams {
                    lambda,
                    as_of,
                    clamp_future,
                    prune_below,
                },
            })?;
            print_json(&outcome.manifest)?;
            let r = &outcome.reputation;
            if r.converged {
                Ok(0)
            } else {
                eprintln!(
                    "error: no convergence after {} iterations (residual {:e}); best iterate written",
                    r.iterations_used, r.residual_l1
                );
                Ok(EXIT_NOT_CONVERGED)
            }
        }
        Command::Rank {
            in_dir,
            method,
            top_n,
            unweighted,
            all,
            force,
        } => {
            let method: RankMethod = method.parse()?;
            let opts = RankOptions {
                unweighted,
                all_addresses: all,
                force,
            };
            print_json(&cmd_rank(&in_dir, method, top_n, &opts)?)?;
            Ok(0)
        }
        Command::Query {
            in_dir,
            text,
            k,
            chain,
            tags,
            active_from,
            active_to,
            epsilon,
            force,
            dim,
        } => {
            let options = QueryOptions {
                k,
                filters: QueryFilters {
                    chain,
                    tags,
                    active_within: window(active_from, active_to)?,
                },
                epsilon,
                force,
            };
            let results = cmd_query(&QueryArgs {
                in_dir,
                text,
                options,
                dim,
            })?;
            let out: Vec<QueryResultOut> = results.into_iter().map(Into::into).collect();
            print_json(&out)?;
            Ok(0)
        }
        Command::Compare {
            in_dir,
            format,
            unweighted,
            all,
            force,
        } => {
            let opts = RankOptions {
                unweighted,
                all_addresses: all,
                force,
            };
            let report = cmd_compare(&in_dir, &opts)?;
            match format {
                Format::Table => print!("{}", report.to_table()),
                Format::Json => print_json(&report)?,
            }
            Ok(0)
        }
        Command::Sybil { in_dir, address } => {
            let report = cmd_sybil(&in_dir, &Address::new(&address)?)?;
            print_json(&report)?;
            Ok(0)
        }
        Command::Scenario {
            out,
            seed,
            n_spam,
            spam_value,
            spam_repeat,
            spam_seed,
            n_legit,
            legit_total,
            legit_seed,
            legit_spread,
            alpha,
            lambda,
        } => {
            let params = SpamScenarioParams {
                n_spam_payers: n_spam,
                spam_value,
                spam_payments_per_wallet: spam_repeat,
                spam_seed,
                n_legit_payers: n_legit,
                legit_total,
                legit_seed,
                legit_spread,
                rng_seed: seed,
                ..SpamScenarioParams::default()
            };
            let cfg = VerdictConfig {
                solver: SolverConfig::with_alpha(alpha),
                flows: FlowParams::with_lambda(lambda),
                ..VerdictConfig::default()
            };
            print_json(&cmd_scenario_spam(&params, &cfg, &out)?)?;
            Ok(0)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NotConverged { .. } | Error::Singular => EXIT_NOT_CONVERGED,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
