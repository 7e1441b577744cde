//! System-optimal flow assignment.
//!
//! Minimizes `J(x) = sum_e x_e t_e(x_e)` under per-demand flow conservation
//! with Frank-Wolfe: marginal costs, per-demand all-or-nothing shortest
//! paths, and an exact line search along the segment.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Demand, EdgeId, EdgeKey, NodeId, RoadNetwork};

/// Per-node conservation tolerance relative to the demand rate.
pub const CONSERVATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub gap_tol: f64,
    /// Record objective and gap of every iteration.
    #[serde(skip)]
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            gap_tol: 1e-4,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// `per_demand[m][e]`: flow of demand `m` on edge `e`.
    pub per_demand: Vec<Vec<f64>>,
    pub aggregate: Vec<f64>,
    pub objective: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl FlowSolution {
    /// Builds a solution from per-demand flows, recomputing aggregates,
    /// objective and gap.
    pub fn from_per_demand(
        network: &RoadNetwork,
        demands: &[Demand],
        per_demand: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let aggregate = aggregate_flows(network, &per_demand)?;
        let objective = objective(network, &aggregate)?;
        let relative_gap = relative_gap(network, demands, &per_demand)?;
        Ok(Self {
            per_demand,
            aggregate,
            objective,
            relative_gap,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        })
    }

    pub fn flow(&self, edge: EdgeId) -> f64 {
        self.aggregate[edge.0]
    }
}

fn aggregate_flows(network: &RoadNetwork, per_demand: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut agg = vec![0.0; network.edge_count()];
    for flows in per_demand {
        if flows.len() != network.edge_count() {
            return Err(Error::Domain(
                "per-demand flow vector has the wrong length".into(),
            ));
        }
        for (a, &f) in agg.iter_mut().zip(flows) {
            if !(f >= 0.0) {
                return Err(Error::Domain(format!("negative flow {f}")));
            }
            *a += f;
        }
    }
    Ok(agg)
}

/// Total travel-time rate `sum_e x_e t_e(x_e)` for aggregate flows indexed by edge.
pub fn objective(network: &RoadNetwork, flows: &[f64]) -> Result<f64> {
    if flows.len() != network.edge_count() {
        return Err(Error::Domain(format!(
            "expected {} edge flows, got {}",
            network.edge_count(),
            flows.len()
        )));
    }
    let mut total = 0.0;
    for (e, &x) in network.edges().iter().zip(flows) {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("negative flow {x}")));
        }
        total += e.cost(x);
    }
    Ok(total)
}

/// Objective for a sparse flow map keyed by edge endpoints. Missing edges carry zero flow.
pub fn objective_by_key(network: &RoadNetwork, flows: &BTreeMap<EdgeKey, f64>) -> Result<f64> {
    let mut dense = vec![0.0; network.edge_count()];
    for (key, &x) in flows {
        let id = network
            .edge_by_names(&key.0, &key.1)
            .ok_or_else(|| Error::Domain(format!("flow on unknown edge {key}")))?;
        dense[id.0] = x;
    }
    objective(network, &dense)
}

/// Largest conservation residual of one demand over all nodes, including
/// the source and sink balances.
pub fn conservation_residual(network: &RoadNetwork, demand: &Demand, flows: &[f64]) -> f64 {
    let mut balance = vec![0.0; network.node_count()];
    for (i, e) in network.edges().iter().enumerate() {
        balance[e.tail.0] += flows[i];
        balance[e.head.0] -= flows[i];
    }
    balance[demand.origin.0] -= demand.rate;
    balance[demand.destination.0] += demand.rate;
    balance.iter().fold(0.0_f64, |m, b| m.max(b.abs()))
}

fn check_feasible(
    network: &RoadNetwork,
    demands: &[Demand],
    per_demand: &[Vec<f64>],
) -> Result<()> {
    if per_demand.len() != demands.len() {
        return Err(Error::Domain(
            "one flow vector per demand is required".into(),
        ));
    }
    for (d, flows) in demands.iter().zip(per_demand) {
        if flows.len() != network.edge_count() {
            return Err(Error::Domain(
                "per-demand flow vector has the wrong length".into(),
            ));
        }
        if flows.iter().any(|&f| !(f >= 0.0)) {
            return Err(Error::Domain(format!("demand {}: negative flow", d.id)));
        }
        let r = conservation_residual(network, d, flows);
        if r > CONSERVATION_TOL * d.rate.max(1e-300) + 1e-15 {
            return Err(Error::Infeasible {
                demand: d.id,
                reason: format!("conservation residual {r:e} exceeds tolerance"),
            });
        }
    }
    Ok(())
}

/// Frank-Wolfe relative gap `(J - LB) / J`, where `LB` linearizes `J` at the
/// current flows and minimizes over all-or-nothing assignments.
pub fn relative_gap(
    network: &RoadNetwork,
    demands: &[Demand],
    per_demand: &[Vec<f64>],
) -> Result<f64> {
    check_feasible(network, demands, per_demand)?;
    let agg = aggregate_flows(network, per_demand)?;
    let j = objective(network, &agg)?;
    let costs: Vec<f64> = network
        .edges()
        .iter()
        .zip(&agg)
        .map(|(e, &x)| e.marginal_cost(x))
        .collect();
    let target = all_or_nothing(network, demands, &costs)?;
    let target_agg = aggregate_flows(network, &target)?;
    Ok(gap_from(j, &costs, &agg, &target_agg))
}

fn gap_from(j: f64, costs: &[f64], x: &[f64], y: &[f64]) -> f64 {
    if j <= 0.0 {
        return 0.0;
    }
    let reduction: f64 = costs
        .iter()
        .zip(x.iter().zip(y))
        .map(|(c, (x, y))| c * (x - y))
        .sum();
    (reduction / j).max(0.0)
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, then node index.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Label-setting shortest path tree from `source` under nonnegative edge
/// costs. Returns, per node, the edge used to reach it.
pub fn shortest_path_tree(
    network: &RoadNetwork,
    source: NodeId,
    costs: &[f64],
) -> Vec<Option<EdgeId>> {
    let n = network.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source.0] = 0.0;
    heap.push(HeapItem {
        cost: 0.0,
        node: source.0,
    });
    while let Some(HeapItem { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &e in network.out_edges(NodeId(node)) {
            let head = network.edge(e).head.0;
            let nd = cost + costs[e.0];
            if nd < dist[head] {
                dist[head] = nd;
                pred[head] = Some(e);
                heap.push(HeapItem {
                    cost: nd,
                    node: head,
                });
            }
        }
    }
    pred
}

/// Edge sequence from the tree root to `target`, if reachable.
pub fn tree_path(
    network: &RoadNetwork,
    pred: &[Option<EdgeId>],
    source: NodeId,
    target: NodeId,
) -> Option<Vec<EdgeId>> {
    let mut path = Vec::new();
    let mut at = target;
    while at != source {
        let e = pred[at.0]?;
        path.push(e);
        at = network.edge(e).tail;
    }
    path.reverse();
    Some(path)
}

/// Assigns each demand entirely to its shortest path under `costs`.
fn all_or_nothing(
    network: &RoadNetwork,
    demands: &[Demand],
    costs: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let mut trees: BTreeMap<NodeId, Vec<Option<EdgeId>>> = BTreeMap::new();
    let mut out = Vec::with_capacity(demands.len());
    for d in demands {
        let mut flows = vec![0.0; network.edge_count()];
        if d.rate > 0.0 {
            let pred = trees
                .entry(d.origin)
                .or_insert_with(|| shortest_path_tree(network, d.origin, costs));
            let path = tree_path(network, pred, d.origin, d.destination).ok_or_else(|| {
                Error::Infeasible {
                    demand: d.id,
                    reason: format!(
                        "destination {} unreachable from {}",
                        network.node_name(d.destination),
                        network.node_name(d.origin)
                    ),
                }
            })?;
            for e in path {
                flows[e.0] += d.rate;
            }
        }
        out.push(flows);
    }
    Ok(out)
}

/// Step in `[0, 1]` minimizing `J(x + step * dir)`, by bisection on the
/// derivative.
fn line_search(network: &RoadNetwork, x: &[f64], dir: &[f64]) -> f64 {
    let slope = |step: f64| -> f64 {
        network
            .edges()
            .iter()
            .zip(x.iter().zip(dir))
            .filter(|(_, (_, &d))| d != 0.0)
            .map(|(e, (&xe, &d))| d * e.marginal_cost((xe + step * d).max(0.0)))
            .sum()
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves the system-optimal assignment.
///
/// If `max_iters` is reached first the solution is returned with
/// `converged = false` and the achieved gap.
pub fn solve_flow(
    network: &RoadNetwork,
    demands: &[Demand],
    options: &SolveOptions,
) -> Result<FlowSolution> {
    for d in demands {
        if d.rate > 0.0 && !network.reachable(d.origin, d.destination) {
            return Err(Error::Infeasible {
                demand: d.id,
                reason: format!(
                    "destination {} unreachable from {}",
                    network.node_name(d.destination),
                    network.node_name(d.origin)
                ),
            });
        }
    }
    let m = network.edge_count();
    let free: Vec<f64> = network
        .edges()
        .iter()
        .map(|e| e.marginal_cost(0.0))
        .collect();
    let mut per_demand = all_or_nothing(network, demands, &free)?;
    let mut agg = aggregate_flows(network, &per_demand)?;
    let mut j = objective(network, &agg)?;
    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut costs = vec![0.0; m];

    while iterations <= options.max_iters {
        for (c, (e, &x)) in costs.iter_mut().zip(network.edges().iter().zip(&agg)) {
            *c = e.marginal_cost(x);
        }
        let target = all_or_nothing(network, demands, &costs)?;
        let target_agg = aggregate_flows(network, &target)?;
        gap = gap_from(j, &costs, &agg, &target_agg);
        if options.trace {
            trace.push(TraceEntry {
                iteration: iterations,
                objective: j,
                relative_gap: gap,
            });
        }
        if gap <= options.gap_tol {
            converged = true;
            break;
        }
        if iterations == options.max_iters {
            break;
        }
        let dir: Vec<f64> = target_agg.iter().zip(&agg).map(|(y, x)| y - x).collect();
        let step = line_search(network, &agg, &dir);
        if step == 0.0 {
            // The linearization already certifies this point.
            break;
        }
        for (xd, yd) in per_demand.iter_mut().zip(&target) {
            for (x, &y) in xd.iter_mut().zip(yd) {
                *x += step * (y - *x);
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
        agg = aggregate_flows(network, &per_demand)?;
        j = objective(network, &agg)?;
        iterations += 1;
    }

    for (d, flows) in demands.iter().zip(per_demand.iter_mut()) {
        cancel_cycles(network, d, flows);
    }
    agg = aggregate_flows(network, &per_demand)?;
    j = objective(network, &agg)?;
    if !converged {
        log::warn!("flow solver stopped after {iterations} iterations with relative gap {gap:e}");
    }
    Ok(FlowSolution {
        per_demand,
        aggregate: agg,
        objective: j,
        relative_gap: gap,
        iterations,
        converged,
        trace,
    })
}

/// Removes directed cycles from one demand's flow. Cancelling a cycle keeps
/// conservation and never increases the objective.
pub fn cancel_cycles(network: &RoadNetwork, demand: &Demand, flows: &mut [f64]) -> usize {
    let _ = demand;
    let n = network.node_count();
    let positive = |flows: &[f64], e: EdgeId| flows[e.0] > 0.0;
    let mut cancelled = 0;
    loop {
        // Iterative DFS looking for a back edge in the positive-flow subgraph.
        let mut state = vec![0u8; n]; // 0 new, 1 on stack, 2 finished
        let mut via = vec![None::<EdgeId>; n];
        let mut cycle: Option<(NodeId, EdgeId)> = None;
        'outer: for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut stack: Vec<(NodeId, usize)> = vec![(NodeId(start), 0)];
            state[start] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let out = network.out_edges(node);
                if *next < out.len() {
                    let e = out[*next];
                    *next += 1;
                    if !positive(flows, e) {
                        continue;
                    }
                    let h = network.edge(e).head;
                    match state[h.0] {
                        0 => {
                            state[h.0] = 1;
                            via[h.0] = Some(e);
                            stack.push((h, 0));
                        }
                        1 => {
                            cycle = Some((h, e));
                            break 'outer;
                        }
                        _ => {}
                    }
                } else {
                    state[node.0] = 2;
                    stack.pop();
                }
            }
        }
        let Some((entry, closing)) = cycle else {
            return cancelled;
        };
        let mut edges = vec![closing];
        let mut at = network.edge(closing).tail;
        while at != entry {
            let e = via[at.0].expect("cycle path is on the DFS stack");
            edges.push(e);
            at = network.edge(e).tail;
        }
        let amount = edges
            .iter()
            .map(|e| flows[e.0])
            .fold(f64::INFINITY, f64::min);
        for e in edges {
            if flows[e.0] == amount {
                flows[e.0] = 0.0;
            } else {
                flows[e.0] = (flows[e.0] - amount).max(0.0);
            }
        }
        cancelled += 1;
    }
}

// ---------------------------------------------------------------------------
// Serialization

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeFlowRecord {
    pub tail: String,
    pub head: String,
    pub flow_vps: f64,
    /// Demand index -> flow, nonzero entries only.
    pub per_demand: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSolutionFile {
    pub edges: Vec<EdgeFlowRecord>,
    pub objective: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub converged: bool,
}

fn default_true() -> bool {
    true
}

impl FlowSolutionFile {
    pub fn from_solution(network: &RoadNetwork, solution: &FlowSolution) -> Self {
        let edges = (0..network.edge_count())
            .map(|i| {
                let key = network.edge_key(EdgeId(i));
                let per_demand = solution
                    .per_demand
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| f[i] > 0.0)
                    .map(|(m, f)| (m.to_string(), f[i]))
                    .collect();
                EdgeFlowRecord {
                    tail: key.0,
                    head: key.1,
                    flow_vps: solution.aggregate[i],
                    per_demand,
                }
            })
            .collect();
        Self {
            edges,
            objective: solution.objective,
            relative_gap: solution.relative_gap,
            iterations: solution.iterations,
            converged: solution.converged,
        }
    }

    pub fn into_solution(self, network: &RoadNetwork, demands: &[Demand]) -> Result<FlowSolution> {
        let mut per_demand = vec![vec![0.0; network.edge_count()]; demands.len()];
        let mut aggregate = vec![0.0; network.edge_count()];
        for rec in &self.edges {
            let e = network.edge_by_names(&rec.tail, &rec.head).ok_or_else(|| {
                Error::Validation(format!("flow on unknown edge {} -> {}", rec.tail, rec.head))
            })?;
            aggregate[e.0] = rec.flow_vps;
            for (m, &f) in &rec.per_demand {
                let idx: usize = m
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad demand index {m:?}")))?;
                let slot = per_demand
                    .get_mut(idx)
                    .ok_or_else(|| Error::Validation(format!("unknown demand index {idx}")))?;
                slot[e.0] = f;
            }
        }
        Ok(FlowSolution {
            per_demand,
            aggregate,
            objective: self.objective,
            relative_gap: self.relative_gap,
            iterations: self.iterations,
            converged: self.converged,
            trace: Vec::new(),
        })
    }
}

pub fn serialize_solution(network: &RoadNetwork, solution: &FlowSolution) -> String {
    let mut s = serde_json::to_string_pretty(&FlowSolutionFile::from_solution(network, solution))
        .expect("flow serialization is infallible");
    s.push('\n');
    s
}

pub fn load_solution(
    text: &str,
    network: &RoadNetwork,
    demands: &[Demand],
) -> Result<FlowSolution> {
    let file: FlowSolutionFile = serde_json::from_str(text).map_err(Error::from_json)?;
    file.into_solution(network, demands)
}

/// `tail,head,flow_vps` rows for plotting the flow map.
pub fn flow_map_csv(network: &RoadNetwork, solution: &FlowSolution) -> String {
    let mut out = String::from("tail,head,flow_vps,travel_time_s\n");
    for (i, e) in network.edges().iter().enumerate() {
        let key = network.edge_key(EdgeId(i));
        out.push_str(&format!(
            "{},{},{},{}\n",
            key.0,
            key.1,
            solution.aggregate[i],
            e.travel_time(solution.aggregate[i])
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, Node, NodeKind};
    use crate::poly::golden_section;

    /// o -> a -> d and o -> b -> d. The second leg of each route is short.
    pub(crate) fn two_route(t_a: f64, t_b: f64, cap: f64) -> (RoadNetwork, Vec<Demand>) {
        let nodes = ["o", "a", "b", "d"]
            .iter()
            .map(|n| Node {
                name: n.to_string(),
                kind: NodeKind::Depot,
            })
            .collect();
        let e = |t, h, t0| Edge {
            tail: NodeId(t),
            head: NodeId(h),
            free_flow_time: t0,
            capacity: cap,
            length: 100.0,
        };
        // Tiny second legs with huge capacity keep the route cost dominated
        // by the first edge.
        let big = |t, h| Edge {
            tail: NodeId(t),
            head: NodeId(h),
            free_flow_time: 1e-3,
            capacity: 1e6,
            length: 100.0,
        };
        let net = RoadNetwork::new(
            nodes,
            vec![e(0, 1, t_a), e(0, 2, t_b), big(1, 3), big(2, 3)],
        )
        .unwrap();
        let demands = vec![Demand {
            id: 0,
            origin: NodeId(0),
            destination: NodeId(3),
            rate: 0.2,
        }];
        (net, demands)
    }

    #[test]
    fn objective_examples() {
        let (net, _) = two_route(10.0, 10.0, 0.5);
        let mut x = vec![0.0; 4];
        assert_eq!(objective(&net, &x).unwrap(), 0.0);
        x[0] = 0.5;
        assert!((objective(&net, &x).unwrap() - 5.75).abs() < 1e-12);
        x[1] = 0.5;
        assert!((objective(&net, &x).unwrap() - 11.5).abs() < 1e-12);
        assert!(objective(&net, &[0.0; 3]).is_err());
        let mut map = BTreeMap::new();
        map.insert(EdgeKey("o".into(), "zz".into()), 0.1);
        assert!(matches!(
            objective_by_key(&net, &map),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn symmetric_split() {
        let (net, demands) = two_route(10.0, 10.0, 0.5);
        let opts = SolveOptions {
            gap_tol: 1e-12,
            ..Default::default()
        };
        let sol = solve_flow(&net, &demands, &opts).unwrap();
        assert!((sol.aggregate[0] - 0.1).abs() < 1e-6, "{:?}", sol.aggregate);
        assert!((sol.aggregate[1] - 0.1).abs() < 1e-6);
        let gap = relative_gap(&net, &demands, &sol.per_demand).unwrap();
        assert!(gap <= 1e-10, "gap {gap}");
    }

    #[test]
    fn asymmetric_split_matches_brute_force() {
        for rate in [0.2, 0.8] {
            let (net, mut demands) = two_route(10.0, 20.0, 0.5);
            demands[0].rate = rate;
            let opts = SolveOptions {
                gap_tol: 1e-12,
                max_iters: 100_000,
                ..Default::default()
            };
            let sol = solve_flow(&net, &demands, &opts).unwrap();
            let bpr = |t0: f64, cap: f64, x: f64| x * t0 * (1.0 + 0.15 * (x / cap).powi(4));
            let j = |p: f64| {
                bpr(10.0, 0.5, p)
                    + bpr(20.0, 0.5, rate - p)
                    + bpr(1e-3, 1e6, p)
                    + bpr(1e-3, 1e6, rate - p)
            };
            let (mut best, mut best_j) = (0.0, f64::INFINITY);
            for k in 0..=20_000 {
                let p = rate * k as f64 / 20_000.0;
                if j(p) < best_j {
                    (best, best_j) = (p, j(p));
                }
            }
            let h = rate / 20_000.0;
            let p = golden_section(j, (best - h).max(0.0), (best + h).min(rate), 1e-12);
            assert!(
                (sol.aggregate[0] - p).abs() < 1e-6,
                "rate {rate}: {} vs {p}",
                sol.aggregate[0]
            );
        }
    }

    #[test]
    fn all_or_nothing_start_has_positive_gap() {
        let (net, demands) = two_route(10.0, 20.0, 0.5);
        let aon = all_or_nothing(&net, &demands, &[10.0, 20.0, 1e-3, 1e-3]).unwrap();
        // 0.2 on a 0.5-capacity edge is below the split point, so force the
        // slower route to make the point clearly suboptimal.
        let mut flows = aon[0].clone();
        flows.swap(0, 1);
        flows.swap(2, 3);
        assert!(relative_gap(&net, &demands, &[flows]).unwrap() > 0.0);
    }

    #[test]
    fn unreachable_demand_is_named() {
        let (net, _) = two_route(10.0, 10.0, 0.5);
        let bad = vec![Demand {
            id: 4,
            origin: NodeId(3),
            destination: NodeId(0),
            rate: 0.1,
        }];
        match solve_flow(&net, &bad, &SolveOptions::default()) {
            Err(Error::Infeasible { demand: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infeasible_flows_are_rejected_by_gap() {
        let (net, demands) = two_route(10.0, 10.0, 0.5);
        let flows = vec![vec![0.1, 0.0, 0.1, 0.0]];
        assert!(relative_gap(&net, &demands, &flows).is_err());
    }

    #[test]
    fn cycle_cancellation_keeps_conservation() {
        // o -> a -> d with an extra a <-> b loop carrying flow.
        let nodes = ["o", "a", "b", "d"]
            .iter()
            .map(|n| Node {
                name: n.to_string(),
                kind: NodeKind::Depot,
            })
            .collect();
        let e = |t, h| Edge {
            tail: NodeId(t),
            head: NodeId(h),
            free_flow_time: 1.0,
            capacity: 1.0,
            length: 1.0,
        };
        let net = RoadNetwork::new(nodes, vec![e(0, 1), e(1, 3), e(1, 2), e(2, 1)]).unwrap();
        let d = Demand {
            id: 0,
            origin: NodeId(0),
            destination: NodeId(3),
            rate: 0.3,
        };
        let mut flows = vec![0.3, 0.3, 0.05, 0.05];
        assert_eq!(cancel_cycles(&net, &d, &mut flows), 1);
        assert_eq!(flows, vec![0.3, 0.3, 0.0, 0.0]);
        assert!(conservation_residual(&net, &d, &flows) < 1e-15);
    }

    #[test]
    fn serialization_round_trip() {
        let (net, demands) = two_route(10.0, 20.0, 0.5);
        let sol = solve_flow(&net, &demands, &SolveOptions::default()).unwrap();
        let text = serialize_solution(&net, &sol);
        let back = load_solution(&text, &net, &demands).unwrap();
        assert_eq!(back.per_demand, sol.per_demand);
        assert_eq!(back.aggregate, sol.aggregate);
        assert_eq!(back.iterations, sol.iterations);
    }
}
