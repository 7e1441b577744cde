//! End-to-end runs: flow assignment, route recovery, timetabling and
//! coordination at every intersection, with optional feedback rounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coordinator::geometry::{build_conflict_table, GeometryConfig, IntersectionGeometry};
use crate::coordinator::{
    apply_flow_feedback, feedback_updates, simulate_intersection, CoordinationParams, SimReport,
    VehicleLeg,
};
use crate::error::{Error, Result};
use crate::flow::{solve_flow, FlowSolution, SolveOptions};
use crate::grid::{grid_network, random_demands, GridConfig, GridLayout};
use crate::network::{Demand, NodeId, RoadNetwork};
use crate::routes::{
    assign_boundary_conditions, recover_routes, synchronize_departures, DepartureSchedule, Route,
    VehicleItinerary,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub max_iters: usize,
    pub gap_tol: f64,
    /// Departure horizon (s).
    pub horizon_s: f64,
    pub feedback_rounds: usize,
    pub coordination: CoordinationParams,
    pub geometry: GeometryConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let s = SolveOptions::default();
        Self {
            max_iters: s.max_iters,
            gap_tol: s.gap_tol,
            horizon_s: 30.0,
            feedback_rounds: 0,
            coordination: CoordinationParams::default(),
            geometry: GeometryConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_iters: self.max_iters,
            gap_tol: self.gap_tol,
            ..SolveOptions::default()
        }
    }
}

/// Legs crossing one intersection, in entry order.
#[derive(Debug, Clone, Default)]
pub struct IntersectionLegs {
    pub legs: Vec<VehicleLeg>,
    /// Legs that enter and leave on the same side; the geometry has no U-turn path.
    pub skipped_u_turns: usize,
}

/// Converts the itinerary legs at `intersection` into coordinator legs.
pub fn intersection_legs(
    network: &RoadNetwork,
    layout: &GridLayout,
    geometry: &IntersectionGeometry,
    solution: &FlowSolution,
    itineraries: &[VehicleItinerary],
    intersection: NodeId,
) -> Result<IntersectionLegs> {
    let mut out = IntersectionLegs::default();
    for it in itineraries {
        for leg in it.legs.iter().filter(|l| l.intersection == intersection) {
            let entry_from = network.edge(leg.entry_edge).tail;
            let exit_to = network.edge(leg.exit_edge).head;
            let side = |n: NodeId| {
                layout.side(intersection, n).ok_or_else(|| {
                    Error::Scenario(format!(
                        "{} is not adjacent to {}",
                        network.node_name(n),
                        network.node_name(intersection)
                    ))
                })
            };
            let (entry, exit) = (side(entry_from)?, side(exit_to)?);
            if entry == exit {
                out.skipped_u_turns += 1;
                continue;
            }
            let path = geometry
                .path_id(entry, exit)
                .ok_or_else(|| Error::Scenario(format!("no path from {entry} to {exit}")))?;
            out.legs.push(VehicleLeg {
                vehicle: it.vehicle,
                path,
                t0: leg.t_entry,
                tf: leg.t_exit,
                v0: leg.v_entry,
                vf: leg.v_exit,
                slot_s: 1.0 / solution.aggregate[leg.exit_edge.0],
                entry_edge: Some(network.edge_key(leg.entry_edge)),
                exit_edge: Some(network.edge_key(leg.exit_edge)),
            });
        }
    }
    out.legs
        .sort_by(|a, b| a.t0.total_cmp(&b.t0).then(a.vehicle.cmp(&b.vehicle)));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct IntersectionRun {
    pub name: String,
    pub legs: Vec<VehicleLeg>,
    pub skipped_u_turns: usize,
    pub report: SimReport,
}

/// One pass of every stage.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub network: RoadNetwork,
    pub solution: FlowSolution,
    pub routes: Vec<Route>,
    pub schedule: DepartureSchedule,
    pub itineraries: Vec<VehicleItinerary>,
    pub intersections: Vec<IntersectionRun>,
}

impl RoundOutput {
    pub fn deferred_vehicles(&self) -> usize {
        self.intersections
            .iter()
            .map(|r| r.report.deferred_vehicles)
            .sum()
    }

    pub fn hard_infeasibilities(&self) -> usize {
        self.intersections
            .iter()
            .map(|r| r.report.hard_infeasibilities)
            .sum()
    }

    pub fn safety_violations(&self) -> usize {
        self.intersections
            .iter()
            .map(|r| r.report.safety_violations())
            .sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.intersections
            .iter()
            .map(|r| r.report.total_energy)
            .sum()
    }

    pub fn summary(&self) -> RoundSummary {
        RoundSummary {
            relative_gap: self.solution.relative_gap,
            objective: self.solution.objective,
            iterations: self.solution.iterations,
            routes: self.routes.len(),
            vehicles: self.schedule.vehicle_count(),
            intersection_legs: self.intersections.iter().map(|r| r.legs.len()).sum(),
            skipped_u_turns: self.intersections.iter().map(|r| r.skipped_u_turns).sum(),
            total_energy: self.total_energy(),
            lateral_violations: self
                .intersections
                .iter()
                .map(|r| r.report.lateral_violations)
                .sum(),
            rear_end_violations: self
                .intersections
                .iter()
                .map(|r| r.report.rear_end_violations)
                .sum(),
            deferred_vehicles: self.deferred_vehicles(),
            hard_infeasibilities: self.hard_infeasibilities(),
            feedback_events: self
                .intersections
                .iter()
                .map(|r| r.report.feedback.len())
                .sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub relative_gap: f64,
    pub objective: f64,
    pub iterations: usize,
    pub routes: usize,
    pub vehicles: usize,
    pub intersection_legs: usize,
    pub skipped_u_turns: usize,
    pub total_energy: f64,
    pub lateral_violations: usize,
    pub rear_end_violations: usize,
    pub deferred_vehicles: usize,
    pub hard_infeasibilities: usize,
    pub feedback_events: usize,
}

/// Coordinates every intersection of a solved and timetabled network.
pub fn simulate_all(
    network: &RoadNetwork,
    solution: &FlowSolution,
    itineraries: &[VehicleItinerary],
    config: &PipelineConfig,
) -> Result<Vec<IntersectionRun>> {
    let layout = GridLayout::infer(network).ok_or_else(|| {
        Error::Scenario("intersection simulation needs grid-style node ids".into())
    })?;
    let geometry = build_conflict_table(&config.geometry)?;
    let mut out = Vec::new();
    for r in network.intersections() {
        let legs = intersection_legs(network, &layout, &geometry, solution, itineraries, r)?;
        let name = network.node_name(r).to_string();
        let report = simulate_intersection(&geometry, &legs.legs, &config.coordination).map_err(
            |e| match e {
                Error::Scenario(m) => Error::Scenario(format!("intersection {name}: {m}")),
                e => Error::Scenario(format!("intersection {name}: {e}")),
            },
        )?;
        out.push(IntersectionRun {
            name,
            legs: legs.legs,
            skipped_u_turns: legs.skipped_u_turns,
            report,
        });
    }
    Ok(out)
}

pub fn run_round(
    network: &RoadNetwork,
    demands: &[Demand],
    config: &PipelineConfig,
) -> Result<RoundOutput> {
    let solution = solve_flow(network, demands, &config.solve_options())?;
    let routes = recover_routes(network, &solution, demands)?;
    let schedule = synchronize_departures(&routes, config.horizon_s)?;
    let itineraries = assign_boundary_conditions(
        network,
        &routes,
        &schedule,
        &solution,
        &config.coordination.limits,
    )?;
    let intersections = simulate_all(network, &solution, &itineraries, config)?;
    Ok(RoundOutput {
        network: network.clone(),
        solution,
        routes,
        schedule,
        itineraries,
        intersections,
    })
}

/// Runs the initial round plus `config.feedback_rounds` feedback rounds.
/// Stops early once a round produces no feedback.
pub fn run_pipeline(
    network: &RoadNetwork,
    demands: &[Demand],
    config: &PipelineConfig,
) -> Result<Vec<RoundOutput>> {
    let mut rounds = vec![run_round(network, demands, config)?];
    for _ in 0..config.feedback_rounds {
        let last = rounds.last().expect("at least one round");
        let updates: Vec<_> = last
            .intersections
            .iter()
            .flat_map(|r| feedback_updates(&r.report.feedback))
            .collect();
        if updates.is_empty() {
            break;
        }
        let next = apply_flow_feedback(&last.network, &updates)?;
        rounds.push(run_round(&next, demands, config)?);
    }
    Ok(rounds)
}

/// A single-intersection scenario drawn from the generated grid: the
/// earliest `count` legs through the bottom-left intersection, with the
/// horizon grown until enough vehicles cross it.
pub fn busy_intersection_legs(
    seed: u64,
    count: usize,
    config: &PipelineConfig,
) -> Result<Vec<VehicleLeg>> {
    let grid = GridConfig::default();
    let network = grid_network(&grid)?;
    let demands = random_demands(&network, &grid, seed)?;
    let layout = GridLayout::infer(&network).expect("generated grid has a layout");
    let target = layout
        .bottom_left_intersection(&network)
        .expect("generated grid has intersections");
    let geometry = build_conflict_table(&config.geometry)?;
    let solution = solve_flow(&network, &demands, &config.solve_options())?;
    let routes = recover_routes(&network, &solution, &demands)?;
    let mut horizon = 60.0;
    let mut legs: BTreeMap<_, _> = BTreeMap::new();
    for _ in 0..40 {
        let schedule = synchronize_departures(&routes, horizon)?;
        let itineraries = assign_boundary_conditions(
            &network,
            &routes,
            &schedule,
            &solution,
            &config.coordination.limits,
        )?;
        let found = intersection_legs(
            &network,
            &layout,
            &geometry,
            &solution,
            &itineraries,
            target,
        )?;
        if found.legs.len() >= count {
            legs = found.legs.into_iter().take(count).enumerate().collect();
            break;
        }
        horizon *= 1.25;
    }
    if legs.len() < count {
        return Err(Error::Scenario(format!(
            "fewer than {count} vehicles cross the bottom-left intersection"
        )));
    }
    Ok(legs.into_values().collect())
}
