//! Road network, travel demands and the BPR latency function.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BPR coefficient multiplying `(x / capacity)^4`.
pub const BPR_ALPHA: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Intersection,
    Depot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

/// A directed road segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub tail: NodeId,
    pub head: NodeId,
    /// Free-flow travel time in seconds.
    pub free_flow_time: f64,
    /// Capacity in vehicles per second.
    pub capacity: f64,
    /// Length in meters.
    pub length: f64,
}

impl Edge {
    /// BPR travel time. Callers guarantee `flow >= 0`.
    #[inline]
    pub fn travel_time(&self, flow: f64) -> f64 {
        let r = flow / self.capacity;
        self.free_flow_time * (1.0 + BPR_ALPHA * r * r * r * r)
    }

    /// `flow * t(flow)`, this edge's contribution to the total travel-time rate.
    #[inline]
    pub fn cost(&self, flow: f64) -> f64 {
        flow * self.travel_time(flow)
    }

    /// `d(x t(x)) / dx = t0 (1 + 0.75 (x / capacity)^4)`.
    #[inline]
    pub fn marginal_cost(&self, flow: f64) -> f64 {
        let r = flow / self.capacity;
        self.free_flow_time * (1.0 + 5.0 * BPR_ALPHA * r * r * r * r)
    }
}

/// Travel time on `edge` at `flow` vehicles per second.
pub fn bpr_travel_time(edge: &Edge, flow: f64) -> Result<f64> {
    if !(flow >= 0.0) || !flow.is_finite() {
        return Err(Error::Domain(format!(
            "flow must be finite and nonnegative, got {flow}"
        )));
    }
    Ok(edge.travel_time(flow))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demand {
    /// Position of the demand in the scenario file.
    pub id: usize,
    pub origin: NodeId,
    pub destination: NodeId,
    /// Vehicles per second.
    pub rate: f64,
}

/// Directed road graph. Immutable after construction.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
    edges: Vec<Edge>,
    by_ends: HashMap<(NodeId, NodeId), EdgeId>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
}

impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if node.name.is_empty() {
                return Err(Error::Validation(format!("node {i} has an empty id")));
            }
            if by_name.insert(node.name.clone(), NodeId(i)).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate node id {:?}",
                    node.name
                )));
            }
        }
        let mut by_ends = HashMap::with_capacity(edges.len());
        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.tail.0 >= nodes.len() {
                return Err(Error::Validation(format!("edge {i}: unknown tail node")));
            }
            if e.head.0 >= nodes.len() {
                return Err(Error::Validation(format!("edge {i}: unknown head node")));
            }
            if e.tail == e.head {
                return Err(Error::Validation(format!(
                    "edge {i}: self loop at {:?}",
                    nodes[e.tail.0].name
                )));
            }
            for (what, v) in [
                ("t0_s", e.free_flow_time),
                ("capacity_vps", e.capacity),
                ("length_m", e.length),
            ] {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "edge {} -> {}: {what} must be positive, got {v}",
                        nodes[e.tail.0].name, nodes[e.head.0].name
                    )));
                }
            }
            if by_ends.insert((e.tail, e.head), EdgeId(i)).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate edge {} -> {}",
                    nodes[e.tail.0].name, nodes[e.head.0].name
                )));
            }
            out_edges[e.tail.0].push(EdgeId(i));
            in_edges[e.head.0].push(EdgeId(i));
        }
        // Adjacency is kept sorted by the node id of the far end so every
        // traversal is deterministic and prefers lexicographically smaller ids.
        for list in &mut out_edges {
            list.sort_by(|a, b| {
                nodes[edges[a.0].head.0]
                    .name
                    .cmp(&nodes[edges[b.0].head.0].name)
            });
        }
        for list in &mut in_edges {
            list.sort_by(|a, b| {
                nodes[edges[a.0].tail.0]
                    .name
                    .cmp(&nodes[edges[b.0].tail.0].name)
            });
        }
        Ok(Self {
            nodes,
            by_name,
            edges,
            by_ends,
            out_edges,
            in_edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn edge_between(&self, tail: NodeId, head: NodeId) -> Option<EdgeId> {
        self.by_ends.get(&(tail, head)).copied()
    }

    pub fn edge_by_names(&self, tail: &str, head: &str) -> Option<EdgeId> {
        self.edge_between(self.node_id(tail)?, self.node_id(head)?)
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out_edges[node.0]
    }

    pub fn in_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.in_edges[node.0]
    }

    pub fn intersections(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Intersection)
            .map(|(i, _)| NodeId(i))
    }

    pub fn depots(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Depot)
            .map(|(i, _)| NodeId(i))
    }

    /// `(tail name, head name)` of an edge.
    pub fn edge_key(&self, id: EdgeId) -> EdgeKey {
        let e = &self.edges[id.0];
        EdgeKey(
            self.node_name(e.tail).to_owned(),
            self.node_name(e.head).to_owned(),
        )
    }

    /// Copy of the network with the free-flow time of `edge` replaced.
    pub fn with_free_flow_time(&self, edge: EdgeId, t0: f64) -> Result<Self> {
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(Error::Domain(format!(
                "free-flow time must be positive, got {t0}"
            )));
        }
        let mut next = self.clone();
        next.edges[edge.0].free_flow_time = t0;
        Ok(next)
    }

    /// True if `to` is reachable from `from`.
    pub fn reachable(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        seen[from.0] = true;
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            for &e in &self.out_edges[n.0] {
                let h = self.edges[e.0].head;
                if !seen[h.0] {
                    seen[h.0] = true;
                    stack.push(h);
                }
            }
        }
        false
    }
}

/// Edge identified by its endpoint node ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey(pub String, pub String);

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.0, self.1)
    }
}

// ---------------------------------------------------------------------------
// Scenario file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub tail: String,
    pub head: String,
    pub t0_s: f64,
    pub capacity_vps: f64,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandRecord {
    pub origin: String,
    pub destination: String,
    pub rate_vps: f64,
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub demands: Vec<DemandRecord>,
}

impl ScenarioFile {
    pub fn from_model(network: &RoadNetwork, demands: &[Demand]) -> Self {
        Self {
            nodes: network
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.name.clone(),
                    kind: n.kind,
                })
                .collect(),
            edges: network
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    tail: network.node_name(e.tail).to_owned(),
                    head: network.node_name(e.head).to_owned(),
                    t0_s: e.free_flow_time,
                    capacity_vps: e.capacity,
                    length_m: e.length,
                })
                .collect(),
            demands: demands
                .iter()
                .map(|d| DemandRecord {
                    origin: network.node_name(d.origin).to_owned(),
                    destination: network.node_name(d.destination).to_owned(),
                    rate_vps: d.rate,
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<(RoadNetwork, Vec<Demand>)> {
        let mut index = HashMap::new();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.into_iter().enumerate() {
            if index.insert(n.id.clone(), NodeId(i)).is_some() {
                return Err(Error::Validation(format!("duplicate node id {:?}", n.id)));
            }
            nodes.push(Node {
                name: n.id,
                kind: n.kind,
            });
        }
        let lookup = |name: &str, role: &str, ctx: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Validation(format!("{ctx}: unknown {role} node {name:?}")))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let ctx = format!("edge {i}");
            edges.push(Edge {
                tail: lookup(&e.tail, "tail", &ctx)?,
                head: lookup(&e.head, "head", &ctx)?,
                free_flow_time: e.t0_s,
                capacity: e.capacity_vps,
                length: e.length_m,
            });
        }
        let network = RoadNetwork::new(nodes, edges)?;
        let mut demands = Vec::with_capacity(self.demands.len());
        for (i, d) in self.demands.iter().enumerate() {
            let ctx = format!("demand {i}");
            let origin = lookup(&d.origin, "origin", &ctx)?;
            let destination = lookup(&d.destination, "destination", &ctx)?;
            if origin == destination {
                return Err(Error::Validation(format!(
                    "{ctx}: origin equals destination"
                )));
            }
            if !(d.rate_vps >= 0.0) || !d.rate_vps.is_finite() {
                return Err(Error::Validation(format!(
                    "{ctx}: rate_vps must be nonnegative, got {}",
                    d.rate_vps
                )));
            }
            demands.push(Demand {
                id: i,
                origin,
                destination,
                rate: d.rate_vps,
            });
        }
        Ok((network, demands))
    }
}

/// Parses and validates a scenario document.
pub fn load_network(text: &str) -> Result<(RoadNetwork, Vec<Demand>)> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(Error::from_json)?;
    file.into_model()
}

/// Pretty-printed scenario document; `load_network` inverts it.
pub fn serialize_scenario(network: &RoadNetwork, demands: &[Demand]) -> String {
    let mut text = serde_json::to_string_pretty(&ScenarioFile::from_model(network, demands))
        .expect("scenario serialization is infallible");
    text.push('\n');
    text
}
