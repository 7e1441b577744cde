//! Route recovery, departure synchronization and per-intersection boundary
//! conditions.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowSolution;
use crate::grid::{ordered_out_edges, GridLayout};
use crate::network::{Demand, EdgeId, NodeId, NodeKind, RoadNetwork};
use crate::trajectory::Limits;

/// Residual flows at or below this are treated as exhausted.
const ZERO_FLOW: f64 = 1e-13;
/// Largest residual allowed to remain after decomposition.
const LEFTOVER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub demand: usize,
    /// Index among the routes of the same demand.
    pub index: usize,
    pub edges: Vec<EdgeId>,
    pub flow: f64,
}

/// Decomposes each demand's arc flows into origin-destination paths.
///
/// Paths are grown greedily from the origin along edges with residual flow,
/// preferring the most direct continuation. The bottleneck flow is
/// subtracted and the loop repeats until the origin has no residual outflow.
pub fn recover_routes(
    network: &RoadNetwork,
    solution: &FlowSolution,
    demands: &[Demand],
) -> Result<Vec<Route>> {
    if solution.per_demand.len() != demands.len() {
        return Err(Error::Validation(format!(
            "flow solution has {} demands, scenario has {}",
            solution.per_demand.len(),
            demands.len()
        )));
    }
    let layout = GridLayout::infer(network);
    let mut routes = Vec::new();
    for (demand, flows) in demands.iter().zip(&solution.per_demand) {
        routes.extend(decompose_demand(network, layout.as_ref(), demand, flows)?);
    }
    Ok(routes)
}

fn decompose_demand(
    network: &RoadNetwork,
    layout: Option<&GridLayout>,
    demand: &Demand,
    flows: &[f64],
) -> Result<Vec<Route>> {
    let fail = |reason: String| Error::Decomposition {
        demand: demand.id,
        reason,
    };
    let mut residual: Vec<f64> = flows
        .iter()
        .map(|&f| if f > ZERO_FLOW { f } else { 0.0 })
        .collect();
    let outflow = |residual: &[f64]| -> f64 {
        network
            .out_edges(demand.origin)
            .iter()
            .map(|e| residual[e.0])
            .sum()
    };
    let mut routes = Vec::new();
    let max_routes = network.edge_count() + 1;
    while outflow(&residual) > ZERO_FLOW {
        if routes.len() >= max_routes {
            return Err(fail("decomposition did not terminate".into()));
        }
        let mut path = Vec::new();
        let mut visited = vec![false; network.node_count()];
        let mut at = demand.origin;
        let mut via: Option<EdgeId> = None;
        visited[at.0] = true;
        while at != demand.destination {
            let next = ordered_out_edges(network, layout, via, at)
                .into_iter()
                .find(|e| residual[e.0] > 0.0)
                .ok_or_else(|| fail(format!("residual flow stops at {}", network.node_name(at))))?;
            at = network.edge(next).head;
            if visited[at.0] {
                return Err(fail(format!(
                    "residual flow cycles through {}",
                    network.node_name(at)
                )));
            }
            visited[at.0] = true;
            path.push(next);
            via = Some(next);
        }
        let bottleneck = path
            .iter()
            .map(|e| residual[e.0])
            .fold(f64::INFINITY, f64::min);
        for e in &path {
            let r = &mut residual[e.0];
            *r = if *r <= bottleneck {
                0.0
            } else {
                *r - bottleneck
            };
            if *r <= ZERO_FLOW {
                *r = 0.0;
            }
        }
        routes.push(Route {
            demand: demand.id,
            index: routes.len(),
            edges: path,
            flow: bottleneck,
        });
    }
    let leftover: f64 = residual.iter().sum();
    if leftover > LEFTOVER_TOL {
        return Err(fail(format!(
            "{leftover:e} veh/s of flow is not connected to the origin"
        )));
    }
    Ok(routes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureEvent {
    pub vehicle: usize,
    /// Index into the route list.
    pub route: usize,
    pub time: f64,
}

/// Departures entering one first edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DepartureGroup {
    pub first_edge: EdgeId,
    pub interval: f64,
    pub events: Vec<DepartureEvent>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DepartureSchedule {
    pub groups: Vec<DepartureGroup>,
}

impl DepartureSchedule {
    pub fn vehicle_count(&self) -> usize {
        self.groups.iter().map(|g| g.events.len()).sum()
    }

    /// All events ordered by vehicle id.
    pub fn events(&self) -> Vec<&DepartureEvent> {
        let mut out: Vec<&DepartureEvent> = self.groups.iter().flat_map(|g| &g.events).collect();
        out.sort_by_key(|e| e.vehicle);
        out
    }
}

/// Replaces the asynchronous per-route departures `j / f` with a merged,
/// evenly spaced stream per shared first edge.
///
/// Route `k` contributes `floor(f_k * horizon)` vehicles. The merged stream
/// keeps the order of the asynchronous timestamps (ties go to the lower
/// route index) and spaces departures by the reciprocal of the total route
/// flow entering the edge.
pub fn synchronize_departures(routes: &[Route], horizon_s: f64) -> Result<DepartureSchedule> {
    if !(horizon_s >= 0.0) {
        return Err(Error::Schedule("horizon must be nonnegative".into()));
    }
    let mut by_edge: BTreeMap<EdgeId, Vec<usize>> = BTreeMap::new();
    for (i, r) in routes.iter().enumerate() {
        let first = *r
            .edges
            .first()
            .ok_or_else(|| Error::Schedule(format!("route {i} has no edges")))?;
        by_edge.entry(first).or_default().push(i);
    }
    let mut groups = Vec::new();
    for (edge, members) in by_edge {
        let total: f64 = members.iter().map(|&i| routes[i].flow).sum();
        if !(total > 0.0) {
            return Err(Error::Schedule(format!(
                "first edge {} carries no flow",
                edge.0
            )));
        }
        let mut stamps: Vec<(f64, usize)> = Vec::new();
        for &i in &members {
            let f = routes[i].flow;
            let count = (f * horizon_s + 1e-9).floor() as usize;
            stamps.extend((0..count).map(|j| (j as f64 / f, i)));
        }
        stamps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let interval = 1.0 / total;
        let events = stamps
            .into_iter()
            .enumerate()
            .map(|(k, (_, route))| DepartureEvent {
                vehicle: 0,
                route,
                time: k as f64 * interval,
            })
            .collect();
        groups.push(DepartureGroup {
            first_edge: edge,
            interval,
            events,
        });
    }
    // Vehicle ids follow departure time, then first edge.
    let mut order: Vec<(f64, usize, usize)> = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        for (k, e) in group.events.iter().enumerate() {
            order.push((e.time, g, k));
        }
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (id, (_, g, k)) in order.into_iter().enumerate() {
        groups[g].events[k].vehicle = id;
    }
    Ok(DepartureSchedule { groups })
}

/// Exit time: the natural exit after the two BPR travel
/// times, held back to keep `1 / x_out` spacing behind the previous exit.
pub fn exit_time(
    t_entry: f64,
    t_in: f64,
    t_out: f64,
    previous_exit: Option<f64>,
    x_out: f64,
) -> f64 {
    let natural = t_entry + t_in + t_out;
    match previous_exit {
        Some(p) => natural.max(p + 1.0 / x_out),
        None => natural,
    }
}

/// Boundary speed `s_f / (2 t)` for one half of the leg.
pub fn boundary_speed(length: f64, half_time: f64) -> f64 {
    length / (2.0 * half_time)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub intersection: NodeId,
    pub entry_edge: EdgeId,
    pub exit_edge: EdgeId,
    pub t_entry: f64,
    pub t_exit: f64,
    pub v_entry: f64,
    pub v_exit: f64,
    pub length: f64,
    /// BPR travel times of the entry and exit edges at the assigned flows.
    pub t_in: f64,
    pub t_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleItinerary {
    pub vehicle: usize,
    pub route: usize,
    pub edges: Vec<EdgeId>,
    pub legs: Vec<Leg>,
}

struct LegPlan {
    intersection: NodeId,
    entry: EdgeId,
    exit: EdgeId,
}

fn legs_of(network: &RoadNetwork, edges: &[EdgeId]) -> Vec<LegPlan> {
    edges
        .windows(2)
        .filter_map(|w| {
            let r = network.edge(w[0]).head;
            (network.node(r).kind == NodeKind::Intersection).then_some(LegPlan {
                intersection: r,
                entry: w[0],
                exit: w[1],
            })
        })
        .collect()
}

/// Assigns entry/exit times and boundary speeds at every intersection on
/// every vehicle's route.
///
/// Legs are processed in order of their natural exit time (ties by vehicle
/// id), so the predecessor on each exit edge is always the latest vehicle
/// already assigned there. Entries onto a road are held back the same way,
/// to `1 / x` behind the latest entry already assigned to it.
pub fn assign_boundary_conditions(
    network: &RoadNetwork,
    routes: &[Route],
    schedule: &DepartureSchedule,
    solution: &FlowSolution,
    limits: &Limits,
) -> Result<Vec<VehicleItinerary>> {
    let events = schedule.events();
    let mut itineraries: Vec<VehicleItinerary> = Vec::with_capacity(events.len());
    let mut plans = Vec::with_capacity(events.len());
    let mut index_of: HashMap<usize, usize> = HashMap::new();
    for ev in &events {
        let route = routes.get(ev.route).ok_or_else(|| {
            Error::Schedule(format!(
                "vehicle {} references unknown route {}",
                ev.vehicle, ev.route
            ))
        })?;
        for &e in &route.edges {
            if !(solution.aggregate[e.0] > 0.0) {
                return Err(Error::Schedule(format!(
                    "route {} uses edge {} with zero flow",
                    ev.route,
                    network.edge_key(e)
                )));
            }
        }
        index_of.insert(ev.vehicle, itineraries.len());
        plans.push(legs_of(network, &route.edges));
        itineraries.push(VehicleItinerary {
            vehicle: ev.vehicle,
            route: ev.route,
            edges: route.edges.clone(),
            legs: Vec::new(),
        });
    }
    let travel = |e: EdgeId| network.edge(e).travel_time(solution.aggregate[e.0]);

    // Heap of (natural exit, vehicle, leg index, leg entry time).
    let mut heap: BinaryHeap<Reverse<(Key, usize, usize, Key)>> = BinaryHeap::new();
    for (slot, ev) in events.iter().enumerate() {
        if let Some(first) = plans[slot].first() {
            let natural = ev.time + travel(first.entry) + travel(first.exit);
            heap.push(Reverse((Key(natural), ev.vehicle, 0, Key(ev.time))));
        }
    }
    let mut last_exit: HashMap<EdgeId, f64> = HashMap::new();
    let mut last_entry: HashMap<EdgeId, f64> = HashMap::new();
    while let Some(Reverse((_, vehicle, leg_idx, Key(ready)))) = heap.pop() {
        let slot = index_of[&vehicle];
        let plan = &plans[slot][leg_idx];
        // Vehicles wait at the depot so entries onto a road keep 1 / x spacing.
        let x_in = solution.aggregate[plan.entry.0];
        let t_entry = last_entry
            .get(&plan.entry)
            .map_or(ready, |&p| ready.max(p + 1.0 / x_in));
        last_entry.insert(plan.entry, t_entry);
        let (t_in, t_out) = (travel(plan.entry), travel(plan.exit));
        let x_out = solution.aggregate[plan.exit.0];
        let t_exit = exit_time(
            t_entry,
            t_in,
            t_out,
            last_exit.get(&plan.exit).copied(),
            x_out,
        );
        last_exit.insert(plan.exit, t_exit);
        let length = network.edge(plan.entry).length + network.edge(plan.exit).length;
        let clamp = |v: f64, which: &str| {
            let c = v.clamp(limits.v_min, limits.v_max);
            if c != v {
                log::warn!(
                    "vehicle {vehicle}: {which} speed {v:.3} m/s at {} clamped to {c:.3}",
                    network.node_name(plan.intersection)
                );
            }
            c
        };
        let v_entry = clamp(boundary_speed(length, t_in), "entry");
        let v_exit = clamp(boundary_speed(length, t_out), "exit");
        itineraries[slot].legs.push(Leg {
            intersection: plan.intersection,
            entry_edge: plan.entry,
            exit_edge: plan.exit,
            t_entry,
            t_exit,
            v_entry,
            v_exit,
            length,
            t_in,
            t_out,
        });
        if let Some(next) = plans[slot].get(leg_idx + 1) {
            // The next leg starts where this one ends unless the two share an edge.
            let t_next = if next.entry == plan.exit {
                t_entry + t_in
            } else {
                t_exit
            };
            let natural = t_next + travel(next.entry) + travel(next.exit);
            heap.push(Reverse((Key(natural), vehicle, leg_idx + 1, Key(t_next))));
        }
    }
    Ok(itineraries)
}

/// Total-order wrapper for heap keys.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

// ---------------------------------------------------------------------------
// Serialization

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRecord {
    pub demand: usize,
    pub index: usize,
    pub edges: Vec<(String, String)>,
    pub flow_vps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSetFile {
    pub routes: Vec<RouteRecord>,
}

fn edge_names(network: &RoadNetwork, edges: &[EdgeId]) -> Vec<(String, String)> {
    edges
        .iter()
        .map(|&e| {
            let k = network.edge_key(e);
            (k.0, k.1)
        })
        .collect()
}

fn edge_ids(network: &RoadNetwork, names: &[(String, String)]) -> Result<Vec<EdgeId>> {
    let ids = names
        .iter()
        .map(|(t, h)| {
            network
                .edge_by_names(t, h)
                .ok_or_else(|| Error::Validation(format!("unknown edge {t} -> {h}")))
        })
        .collect::<Result<Vec<_>>>()?;
    for w in ids.windows(2) {
        if network.edge(w[0]).head != network.edge(w[1]).tail {
            return Err(Error::Validation(format!(
                "edges {} and {} are not connected",
                network.edge_key(w[0]),
                network.edge_key(w[1])
            )));
        }
    }
    Ok(ids)
}

pub fn serialize_routes(network: &RoadNetwork, routes: &[Route]) -> String {
    let file = RouteSetFile {
        routes: routes
            .iter()
            .map(|r| RouteRecord {
                demand: r.demand,
                index: r.index,
                edges: edge_names(network, &r.edges),
                flow_vps: r.flow,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("route serialization is infallible");
    s.push('\n');
    s
}

pub fn load_routes(text: &str, network: &RoadNetwork) -> Result<Vec<Route>> {
    let file: RouteSetFile = serde_json::from_str(text).map_err(Error::from_json)?;
    file.routes
        .into_iter()
        .map(|r| {
            if !(r.flow_vps > 0.0) {
                return Err(Error::Validation(format!(
                    "route {}/{} has nonpositive flow",
                    r.demand, r.index
                )));
            }
            Ok(Route {
                demand: r.demand,
                index: r.index,
                edges: edge_ids(network, &r.edges)?,
                flow: r.flow_vps,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegRecord {
    pub intersection: String,
    pub t_entry_s: f64,
    pub t_exit_s: f64,
    pub v_entry_mps: f64,
    pub v_exit_mps: f64,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItineraryRecord {
    pub vehicle: usize,
    pub route: Vec<(String, String)>,
    pub legs: Vec<LegRecord>,
}

pub fn serialize_itineraries(network: &RoadNetwork, itineraries: &[VehicleItinerary]) -> String {
    let records: Vec<ItineraryRecord> = itineraries
        .iter()
        .map(|it| ItineraryRecord {
            vehicle: it.vehicle,
            route: edge_names(network, &it.edges),
            legs: it
                .legs
                .iter()
                .map(|l| LegRecord {
                    intersection: network.node_name(l.intersection).to_string(),
                    t_entry_s: l.t_entry,
                    t_exit_s: l.t_exit,
                    v_entry_mps: l.v_entry,
                    v_exit_mps: l.v_exit,
                    length_m: l.length,
                })
                .collect(),
        })
        .collect();
    let mut s =
        serde_json::to_string_pretty(&records).expect("itinerary serialization is infallible");
    s.push('\n');
    s
}

/// Loads itineraries. Entry and exit edges of each leg are recovered from
/// the route; BPR travel times are recomputed from `solution` when given,
/// otherwise from the free-flow times.
pub fn load_itineraries(
    text: &str,
    network: &RoadNetwork,
    solution: Option<&FlowSolution>,
) -> Result<Vec<VehicleItinerary>> {
    let records: Vec<ItineraryRecord> = serde_json::from_str(text).map_err(Error::from_json)?;
    let travel = |e: EdgeId| {
        let x = solution.map_or(0.0, |s| s.aggregate[e.0]);
        network.edge(e).travel_time(x)
    };
    records
        .into_iter()
        .map(|rec| {
            let edges = edge_ids(network, &rec.route)?;
            let legs = rec
                .legs
                .into_iter()
                .map(|l| {
                    let r = network.node_id(&l.intersection).ok_or_else(|| {
                        Error::Validation(format!("unknown intersection {}", l.intersection))
                    })?;
                    let pos = edges
                        .iter()
                        .position(|&e| network.edge(e).head == r)
                        .filter(|&p| p + 1 < edges.len())
                        .ok_or_else(|| {
                            Error::Validation(format!(
                                "vehicle {}: intersection {} is not inside its route",
                                rec.vehicle, l.intersection
                            ))
                        })?;
                    if !(l.t_exit_s > l.t_entry_s) {
                        return Err(Error::Validation(format!(
                            "vehicle {}: exit time must follow entry time",
                            rec.vehicle
                        )));
                    }
                    let (entry, exit) = (edges[pos], edges[pos + 1]);
                    Ok(Leg {
                        intersection: r,
                        entry_edge: entry,
                        exit_edge: exit,
                        t_entry: l.t_entry_s,
                        t_exit: l.t_exit_s,
                        v_entry: l.v_entry_mps,
                        v_exit: l.v_exit_mps,
                        length: l.length_m,
                        t_in: travel(entry),
                        t_out: travel(exit),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VehicleItinerary {
                vehicle: rec.vehicle,
                route: 0,
                edges,
                legs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepartureGroupRecord {
    pub first_edge: (String, String),
    pub interval_s: f64,
    pub events: Vec<DepartureEvent>,
}

pub fn serialize_schedule(network: &RoadNetwork, schedule: &DepartureSchedule) -> String {
    let groups: Vec<DepartureGroupRecord> = schedule
        .groups
        .iter()
        .map(|g| {
            let k = network.edge_key(g.first_edge);
            DepartureGroupRecord {
                first_edge: (k.0, k.1),
                interval_s: g.interval,
                events: g.events.clone(),
            }
        })
        .collect();
    let mut s =
        serde_json::to_string_pretty(&groups).expect("schedule serialization is infallible");
    s.push('\n');
    s
}
