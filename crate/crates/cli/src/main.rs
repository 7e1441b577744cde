//! Command-line driver for the flow routing and intersection coordination
//! pipeline.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use stages::{Failure, Outcome, SimulateArgs};

#[derive(Debug, Parser)]
#[command(name = "flowcoord", version, about)]
#[command(
    after_help = "Exit codes: 0 success, 1 infeasible result, 2 usage or input error.\n\
Log level comes from FLOWCOORD_LOG (error, warn, info, debug, trace; default warn).\n\
Run `flowcoord config` to print every configuration default as TOML."
)]
struct Cli {
    /// TOML run configuration; missing keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the grid scenario (3x4 intersections with 200 m segments by default) with seeded demands.
    GenGrid {
        /// Demand seed [config default: 7].
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "scenario.json")]
        out: PathBuf,
    },
    /// Solve the system-optimal flow assignment.
    SolveFlow {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "flow.json")]
        out: PathBuf,
        /// Also write the edge flow map as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Relative gap tolerance [config default: 1e-4].
        #[arg(long)]
        gap_tol: Option<f64>,
        /// Iteration cap [config default: 5000].
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Decompose a flow solution into routes.
    RecoverRoutes {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long, default_value = "routes.json")]
        out: PathBuf,
    },
    /// Synchronize departures and assign per-intersection entry and exit times.
    Schedule {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        routes: PathBuf,
        /// Departure horizon in seconds [config default: 30].
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value = "itineraries.json")]
        out: PathBuf,
        /// Also write the merged departure schedule.
        #[arg(long)]
        schedule_out: Option<PathBuf>,
    },
    /// Coordinate the vehicles crossing one intersection.
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        flow: Option<PathBuf>,
        #[arg(long)]
        itineraries: Option<PathBuf>,
        /// Intersection name, e.g. I0_0 [default: bottom-left].
        #[arg(long)]
        intersection: Option<String>,
        /// Ignore the stage files and run the first N vehicles through the
        /// bottom-left intersection of the generated grid.
        #[arg(long, conflicts_with_all = ["scenario", "flow", "itineraries", "intersection"])]
        busy: Option<usize>,
        /// Demand seed for --busy [config default: 7].
        #[arg(long, requires = "busy")]
        seed: Option<u64>,
        #[arg(long, default_value = "sim")]
        out: PathBuf,
    },
    /// Run every stage plus optional flow-feedback rounds.
    Pipeline {
        /// Scenario file; generated from the configured grid and seed when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Feedback rounds after the first pass [config default: 0].
        #[arg(long)]
        feedback_rounds: Option<usize>,
        /// Departure horizon in seconds [config default: 30].
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Certify the closed-form trajectories against the discretized optimum.
    Verify {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the per-case report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = RunConfig::load(cli.config.as_deref()).map_err(Failure::Usage)?;
    match cli.command {
        Command::GenGrid { seed, out } => {
            cfg.seed = seed.unwrap_or(cfg.seed);
            stages::gen_grid(&cfg, &out)
        }
        Command::SolveFlow {
            scenario,
            out,
            csv,
            gap_tol,
            max_iters,
        } => {
            cfg.solver.gap_tol = gap_tol.unwrap_or(cfg.solver.gap_tol);
            cfg.solver.max_iters = max_iters.unwrap_or(cfg.solver.max_iters);
            stages::solve(&cfg, &scenario, &out, csv.as_deref())
        }
        Command::RecoverRoutes {
            scenario,
            flow,
            out,
        } => stages::recover(&scenario, &flow, &out),
        Command::Schedule {
            scenario,
            flow,
            routes,
            horizon,
            out,
            schedule_out,
        } => {
            cfg.horizon_s = horizon.unwrap_or(cfg.horizon_s);
            stages::schedule(
                &cfg,
                &scenario,
                &flow,
                &routes,
                &out,
                schedule_out.as_deref(),
            )
        }
        Command::Simulate {
            scenario,
            flow,
            itineraries,
            intersection,
            busy,
            seed,
            out,
        } => {
            cfg.seed = seed.unwrap_or(cfg.seed);
            stages::simulate(
                &cfg,
                &SimulateArgs {
                    scenario: scenario.as_deref(),
                    flow: flow.as_deref(),
                    itineraries: itineraries.as_deref(),
                    intersection: intersection.as_deref(),
                    busy,
                    out: &out,
                },
            )
        }
        Command::Pipeline {
            scenario,
            feedback_rounds,
            horizon,
            out,
        } => {
            cfg.feedback_rounds = feedback_rounds.unwrap_or(cfg.feedback_rounds);
            cfg.horizon_s = horizon.unwrap_or(cfg.horizon_s);
            stages::pipeline(&cfg, scenario.as_deref(), &out)
        }
        Command::Verify { cases, seed, out } => stages::verify(cases, seed, out.as_deref()),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLOWCOORD_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
