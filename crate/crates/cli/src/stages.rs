//! One function per subcommand. Each reads its inputs, runs one stage and
//! writes the stage's files.

use std::fs;
use std::path::Path;

use anyhow::Context;
use log::info;
use serde::Serialize;

use flowcoord::coordinator::geometry::build_conflict_table;
use flowcoord::coordinator::{simulate_intersection, SimReport};
use flowcoord::flow::{flow_map_csv, load_solution, serialize_solution, solve_flow, FlowSolution};
use flowcoord::grid::{grid_network, random_demands, GridLayout};
use flowcoord::network::{load_network, serialize_scenario, Demand, RoadNetwork};
use flowcoord::oracle::certify;
use flowcoord::pipeline::{
    busy_intersection_legs, intersection_legs, run_pipeline, RoundOutput, RoundSummary,
};
use flowcoord::routes::{
    assign_boundary_conditions, load_itineraries, load_routes, recover_routes,
    serialize_itineraries, serialize_routes, serialize_schedule, synchronize_departures, Route,
    VehicleItinerary,
};
use flowcoord::trajectory::trajectories_csv;
use flowcoord::Error;

use crate::config::RunConfig;

/// Sampling step of the trajectory CSVs (s).
const CSV_DT: f64 = 0.1;

/// How a failure maps onto the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Well-formed inputs with no feasible result.
    Infeasible(anyhow::Error),
    /// Bad arguments, files or configuration.
    Usage(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Infeasible(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Infeasible(e) | Failure::Usage(e) => e,
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Wraps a library error with the stage that raised it.
fn stage<T>(name: &str, r: flowcoord::Result<T>) -> Outcome<T> {
    r.map_err(|e| {
        let usage = matches!(
            e,
            Error::Parse { .. } | Error::Validation(_) | Error::Geometry(_) | Error::Io(_)
        );
        let e = anyhow::Error::new(e).context(format!("{name} failed"));
        if usage {
            Failure::Usage(e)
        } else {
            Failure::Infeasible(e)
        }
    })
}

fn usage<T>(r: anyhow::Result<T>) -> Outcome<T> {
    r.map_err(Failure::Usage)
}

fn read(path: &Path) -> Outcome<String> {
    usage(fs::read_to_string(path).with_context(|| format!("reading {}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    usage((|| {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    })())?;
    info!("wrote {}", path.display());
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load_scenario(path: &Path) -> Outcome<(RoadNetwork, Vec<Demand>)> {
    let text = read(path)?;
    load_network(&text).map_err(|e| {
        Failure::Usage(
            anyhow::Error::new(e).context(format!("loading scenario {}", path.display())),
        )
    })
}

fn load_flow(path: &Path, network: &RoadNetwork, demands: &[Demand]) -> Outcome<FlowSolution> {
    let text = read(path)?;
    stage(
        "loading flow solution",
        load_solution(&text, network, demands),
    )
}

pub fn gen_grid(cfg: &RunConfig, out: &Path) -> Outcome {
    let network = stage("gen-grid", grid_network(&cfg.grid))?;
    let demands = stage("gen-grid", random_demands(&network, &cfg.grid, cfg.seed))?;
    write(out, &serialize_scenario(&network, &demands))?;
    println!(
        "gen-grid: {} intersections, {} depots, {} edges, {} demands (seed {})",
        network.intersections().count(),
        network.depots().count(),
        network.edge_count(),
        demands.len(),
        cfg.seed
    );
    Ok(())
}

fn flow_summary(sol: &FlowSolution) -> String {
    format!(
        "objective {:.6}, relative gap {:.3e}, {} iterations{}",
        sol.objective,
        sol.relative_gap,
        sol.iterations,
        if sol.converged {
            ""
        } else {
            " (not converged)"
        }
    )
}

pub fn solve(cfg: &RunConfig, scenario: &Path, out: &Path, csv: Option<&Path>) -> Outcome {
    let (network, demands) = load_scenario(scenario)?;
    let sol = stage("solve-flow", solve_flow(&network, &demands, &cfg.solver))?;
    write(out, &serialize_solution(&network, &sol))?;
    if let Some(csv) = csv {
        write(csv, &flow_map_csv(&network, &sol))?;
    }
    println!("solve-flow: {}", flow_summary(&sol));
    if !sol.converged {
        return Err(Failure::Infeasible(anyhow::anyhow!(
            "solve-flow: relative gap {:.3e} above tolerance {:.3e} after {} iterations",
            sol.relative_gap,
            cfg.solver.gap_tol,
            sol.iterations
        )));
    }
    Ok(())
}

pub fn recover(scenario: &Path, flow: &Path, out: &Path) -> Outcome {
    let (network, demands) = load_scenario(scenario)?;
    let sol = load_flow(flow, &network, &demands)?;
    let routes = stage("recover-routes", recover_routes(&network, &sol, &demands))?;
    write(out, &serialize_routes(&network, &routes))?;
    println!(
        "recover-routes: {} routes for {} demands",
        routes.len(),
        demands.len()
    );
    Ok(())
}

fn timetable(
    cfg: &RunConfig,
    network: &RoadNetwork,
    sol: &FlowSolution,
    routes: &[Route],
) -> Outcome<(String, Vec<VehicleItinerary>)> {
    let schedule = stage("schedule", synchronize_departures(routes, cfg.horizon_s))?;
    let its = stage(
        "schedule",
        assign_boundary_conditions(network, routes, &schedule, sol, &cfg.coordination.limits),
    )?;
    Ok((serialize_schedule(network, &schedule), its))
}

pub fn schedule(
    cfg: &RunConfig,
    scenario: &Path,
    flow: &Path,
    routes: &Path,
    out: &Path,
    schedule_out: Option<&Path>,
) -> Outcome {
    let (network, demands) = load_scenario(scenario)?;
    let sol = load_flow(flow, &network, &demands)?;
    let routes = stage("loading routes", load_routes(&read(routes)?, &network))?;
    let (sched, its) = timetable(cfg, &network, &sol, &routes)?;
    if let Some(p) = schedule_out {
        write(p, &sched)?;
    }
    write(out, &serialize_itineraries(&network, &its))?;
    let legs: usize = its.iter().map(|i| i.legs.len()).sum();
    println!(
        "schedule: {} vehicles, {legs} intersection legs over {} s",
        its.len(),
        cfg.horizon_s
    );
    Ok(())
}

fn write_report(dir: &Path, report: &SimReport) -> Outcome {
    write(&dir.join("metrics.json"), &report.metrics_json())?;
    write(
        &dir.join("trajectories.csv"),
        &trajectories_csv(&report.trajectories, CSV_DT),
    )?;
    write(
        &dir.join("conflict_audit.csv"),
        &report.conflict_audit_csv(),
    )
}

fn report_summary(name: &str, r: &SimReport) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    format!(
        "{name}: {} vehicles, energy {:.3}, min gap {} m, min headway {} s, {} deferrals, {} violations",
        r.vehicles,
        r.total_energy,
        opt(r.min_gap_m),
        opt(r.min_headway_s),
        r.deferrals,
        r.safety_violations()
    )
}

pub struct SimulateArgs<'a> {
    pub scenario: Option<&'a Path>,
    pub flow: Option<&'a Path>,
    pub itineraries: Option<&'a Path>,
    pub intersection: Option<&'a str>,
    pub busy: Option<usize>,
    pub out: &'a Path,
}

fn need<'p>(p: Option<&'p Path>, flag: &str) -> Outcome<&'p Path> {
    p.ok_or_else(|| {
        Failure::Usage(anyhow::anyhow!(
            "simulate needs --{flag} unless --busy is given"
        ))
    })
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Outcome {
    let pipeline = cfg.pipeline();
    let geometry = stage("simulate", build_conflict_table(&cfg.geometry))?;
    let (name, legs) = if let Some(n) = args.busy {
        let legs = stage("simulate", busy_intersection_legs(cfg.seed, n, &pipeline))?;
        ("bottom-left intersection".to_string(), legs)
    } else {
        let (network, demands) = load_scenario(need(args.scenario, "scenario")?)?;
        let sol = load_flow(need(args.flow, "flow")?, &network, &demands)?;
        let its = stage(
            "loading itineraries",
            load_itineraries(
                &read(need(args.itineraries, "itineraries")?)?,
                &network,
                Some(&sol),
            ),
        )?;
        let layout = GridLayout::infer(&network)
            .ok_or_else(|| Failure::Usage(anyhow::anyhow!("simulate needs grid-style node ids")))?;
        let node = match args.intersection {
            Some(n) => network
                .node_id(n)
                .filter(|&id| network.intersections().any(|r| r == id))
                .ok_or_else(|| Failure::Usage(anyhow::anyhow!("no intersection named {n}")))?,
            None => layout
                .bottom_left_intersection(&network)
                .ok_or_else(|| Failure::Usage(anyhow::anyhow!("network has no intersections")))?,
        };
        let legs = stage(
            "simulate",
            intersection_legs(&network, &layout, &geometry, &sol, &its, node),
        )?;
        (network.node_name(node).to_string(), legs.legs)
    };
    let report = stage(
        "simulate",
        simulate_intersection(&geometry, &legs, &cfg.coordination),
    )?;
    write_report(args.out, &report)?;
    println!("simulate {}", report_summary(&name, &report));
    if report.safety_violations() > 0 {
        return Err(Failure::Infeasible(anyhow::anyhow!(
            "simulate: {} safety violations at {name}",
            report.safety_violations()
        )));
    }
    Ok(())
}

/// Writes every stage file of one round under `dir`.
fn write_round(dir: &Path, round: &RoundOutput, demands: &[Demand]) -> Outcome {
    let net = &round.network;
    write(
        &dir.join("scenario.json"),
        &serialize_scenario(net, demands),
    )?;
    write(
        &dir.join("flow.json"),
        &serialize_solution(net, &round.solution),
    )?;
    write(
        &dir.join("flow_map.csv"),
        &flow_map_csv(net, &round.solution),
    )?;
    write(
        &dir.join("routes.json"),
        &serialize_routes(net, &round.routes),
    )?;
    write(
        &dir.join("schedule.json"),
        &serialize_schedule(net, &round.schedule),
    )?;
    write(
        &dir.join("itineraries.json"),
        &serialize_itineraries(net, &round.itineraries),
    )?;
    for run in &round.intersections {
        write_report(&dir.join("intersections").join(&run.name), &run.report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PipelineSummary {
    rounds: Vec<RoundSummary>,
}

pub fn pipeline(cfg: &RunConfig, scenario: Option<&Path>, out: &Path) -> Outcome {
    let (network, demands) = match scenario {
        Some(p) => load_scenario(p)?,
        None => {
            let n = stage("pipeline", grid_network(&cfg.grid))?;
            let d = stage("pipeline", random_demands(&n, &cfg.grid, cfg.seed))?;
            (n, d)
        }
    };
    let rounds = stage(
        "pipeline",
        run_pipeline(&network, &demands, &cfg.pipeline()),
    )?;
    let mut summaries = Vec::new();
    for (k, round) in rounds.iter().enumerate() {
        write_round(&out.join(format!("round{k}")), round, &demands)?;
        let s = round.summary();
        println!(
            "round {k}: {}; {} routes, {} vehicles, energy {:.3}, {} deferred, {} hard infeasibilities, {} violations",
            flow_summary(&round.solution),
            s.routes,
            s.vehicles,
            s.total_energy,
            s.deferred_vehicles,
            s.hard_infeasibilities,
            s.lateral_violations + s.rear_end_violations
        );
        summaries.push(s);
    }
    write(
        &out.join("summary.json"),
        &json(&PipelineSummary { rounds: summaries }),
    )?;
    let last = rounds.last().expect("at least one round");
    if last.safety_violations() > 0 {
        return Err(Failure::Infeasible(anyhow::anyhow!(
            "pipeline: {} safety violations in the final round",
            last.safety_violations()
        )));
    }
    Ok(())
}

pub fn verify(cases: usize, seed: u64, out: Option<&Path>) -> Outcome {
    let report = stage("verify", certify(cases, seed))?;
    if let Some(p) = out {
        write(p, &json(&report))?;
    }
    let agreements = report.agreements();
    println!(
        "verify: {agreements}/{} oracle agreements, Richardson ratio {:.3}",
        report.cases(),
        report.richardson_ratio
    );
    if agreements < report.cases() || !report.richardson_ok() {
        return Err(Failure::Infeasible(anyhow::anyhow!(
            "verify: {} of {} cases disagree with the oracle",
            report.cases() - agreements,
            report.cases()
        )));
    }
    Ok(())
}
