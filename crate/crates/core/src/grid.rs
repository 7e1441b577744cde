//! Grid scenario generator and the grid layout recovered from node ids.
//!
//! Generated grids name intersections `I{row}_{col}`. A depot sits on every
//! directed link: `D{row}_{col}{dir}` is entered when leaving intersection
//! `(row, col)` toward `dir`, and `B{row}_{col}{dir}` feeds `(row, col)` from
//! the boundary side `dir`. Row 0 is the bottom row, column 0 the left one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::coordinator::geometry::Arm;
use crate::error::{Error, Result};
use crate::network::{Demand, Edge, EdgeId, Node, NodeId, NodeKind, RoadNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    /// Length of every road segment (intersection to depot, depot to intersection).
    pub segment_length_m: f64,
    /// Free-flow time is `segment_length_m / nominal_speed_mps`.
    pub nominal_speed_mps: f64,
    pub capacity_vps: f64,
    pub demands: usize,
    pub min_rate_vps: f64,
    pub max_rate_vps: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 4,
            segment_length_m: 200.0,
            nominal_speed_mps: 10.0,
            capacity_vps: 1.0,
            demands: 30,
            min_rate_vps: 0.05,
            max_rate_vps: 0.3,
        }
    }
}

const DIRS: [(Arm, i64, i64); 4] = [
    (Arm::North, 1, 0),
    (Arm::East, 0, 1),
    (Arm::South, -1, 0),
    (Arm::West, 0, -1),
];

pub fn intersection_name(row: usize, col: usize) -> String {
    format!("I{row}_{col}")
}

pub fn outbound_depot_name(row: usize, col: usize, dir: Arm) -> String {
    format!("D{row}_{col}{}", dir.letter())
}

pub fn inbound_depot_name(row: usize, col: usize, dir: Arm) -> String {
    format!("B{row}_{col}{}", dir.letter())
}

/// Builds the road graph of a `rows x cols` grid.
pub fn grid_network(config: &GridConfig) -> Result<RoadNetwork> {
    if config.rows == 0 || config.cols == 0 {
        return Err(Error::Validation(
            "grid needs at least one row and column".into(),
        ));
    }
    if !(config.nominal_speed_mps > 0.0) {
        return Err(Error::Validation(
            "nominal_speed_mps must be positive".into(),
        ));
    }
    let t0 = config.segment_length_m / config.nominal_speed_mps;
    let mut nodes = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut push = |nodes: &mut Vec<Node>, name: String, kind| {
        names.push(name.clone());
        nodes.push(Node { name, kind });
        NodeId(nodes.len() - 1)
    };
    let mut inter = vec![vec![NodeId(0); config.cols]; config.rows];
    for (r, row) in inter.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = push(&mut nodes, intersection_name(r, c), NodeKind::Intersection);
        }
    }
    let mut edges = Vec::new();
    let mk = |tail, head| Edge {
        tail,
        head,
        free_flow_time: t0,
        capacity: config.capacity_vps,
        length: config.segment_length_m,
    };
    for r in 0..config.rows {
        for c in 0..config.cols {
            for (dir, dr, dc) in DIRS {
                let nr = r as i64 + dr;
                let nc = c as i64 + dc;
                let inside = nr >= 0
                    && nc >= 0
                    && (nr as usize) < config.rows
                    && (nc as usize) < config.cols;
                let out = push(&mut nodes, outbound_depot_name(r, c, dir), NodeKind::Depot);
                edges.push(mk(inter[r][c], out));
                if inside {
                    edges.push(mk(out, inter[nr as usize][nc as usize]));
                } else {
                    let inb = push(&mut nodes, inbound_depot_name(r, c, dir), NodeKind::Depot);
                    edges.push(mk(inb, inter[r][c]));
                }
            }
        }
    }
    RoadNetwork::new(nodes, edges)
}

/// Seeded random demands over the depots of `network`.
///
/// Origins are drawn among depots with an outgoing edge, destinations among
/// depots with an incoming edge; pairs that coincide or are not connected are
/// redrawn.
pub fn random_demands(
    network: &RoadNetwork,
    config: &GridConfig,
    seed: u64,
) -> Result<Vec<Demand>> {
    let origins: Vec<NodeId> = network
        .depots()
        .filter(|&d| !network.out_edges(d).is_empty())
        .collect();
    let dests: Vec<NodeId> = network
        .depots()
        .filter(|&d| !network.in_edges(d).is_empty())
        .collect();
    if origins.is_empty() || dests.is_empty() {
        return Err(Error::Validation("network has no usable depots".into()));
    }
    if !(config.min_rate_vps >= 0.0 && config.max_rate_vps >= config.min_rate_vps) {
        return Err(Error::Validation("invalid demand rate range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demands = Vec::with_capacity(config.demands);
    let mut attempts = 0usize;
    while demands.len() < config.demands {
        attempts += 1;
        if attempts > 1000 * (config.demands + 1) {
            return Err(Error::Validation(
                "could not draw connected depot pairs".into(),
            ));
        }
        let o = origins[rng.gen_range(0..origins.len())];
        let d = dests[rng.gen_range(0..dests.len())];
        let rate = if config.max_rate_vps > config.min_rate_vps {
            rng.gen_range(config.min_rate_vps..config.max_rate_vps)
        } else {
            config.min_rate_vps
        };
        if o == d || !network.reachable(o, d) {
            continue;
        }
        demands.push(Demand {
            id: demands.len(),
            origin: o,
            destination: d,
            rate,
        });
    }
    Ok(demands)
}

/// Schematic node positions of a generated grid. Only directions matter:
/// intersections sit at even lattice points, depots one unit toward their side.
#[derive(Debug, Clone)]
pub struct GridLayout {
    positions: Vec<(f64, f64)>,
}

impl GridLayout {
    /// Recovers the layout from generator-style node ids. Returns `None` if
    /// any node does not follow the naming scheme.
    pub fn infer(network: &RoadNetwork) -> Option<Self> {
        let re = Regex::new(r"^([IDB])(\d+)_(\d+)([NESW]?)$").expect("static regex");
        let mut positions = Vec::with_capacity(network.node_count());
        for node in network.nodes() {
            let caps = re.captures(&node.name)?;
            let row: f64 = caps[2].parse().ok()?;
            let col: f64 = caps[3].parse().ok()?;
            let base = (2.0 * col, 2.0 * row);
            let pos = match (&caps[1], &caps[4]) {
                ("I", "") => base,
                ("D" | "B", d) if !d.is_empty() => {
                    let (dx, dy) = Arm::from_letter(d)?.outward();
                    (base.0 + dx, base.1 + dy)
                }
                _ => return None,
            };
            positions.push(pos);
        }
        Some(Self { positions })
    }

    pub fn position(&self, node: NodeId) -> (f64, f64) {
        self.positions[node.0]
    }

    /// Side of `intersection` on which `neighbor` lies.
    pub fn side(&self, intersection: NodeId, neighbor: NodeId) -> Option<Arm> {
        let (x0, y0) = self.position(intersection);
        let (x1, y1) = self.position(neighbor);
        Arm::from_vector(x1 - x0, y1 - y0)
    }

    /// Turn rank of continuing `prev -> at -> next`: 0 straight, 1 turn, 2 reversal.
    pub fn turn_rank(&self, prev: NodeId, at: NodeId, next: NodeId) -> u8 {
        let (px, py) = self.position(prev);
        let (ax, ay) = self.position(at);
        let (nx, ny) = self.position(next);
        let (hx, hy) = (ax - px, ay - py);
        let (ox, oy) = (nx - ax, ny - ay);
        let cross = hx * oy - hy * ox;
        let dot = hx * ox + hy * oy;
        if cross.abs() < 1e-9 {
            if dot > 0.0 {
                0
            } else {
                2
            }
        } else {
            1
        }
    }

    /// The intersection with the smallest `(y, x)`.
    pub fn bottom_left_intersection(&self, network: &RoadNetwork) -> Option<NodeId> {
        network.intersections().min_by(|&a, &b| {
            let (ax, ay) = self.position(a);
            let (bx, by) = self.position(b);
            ay.total_cmp(&by).then(ax.total_cmp(&bx))
        })
    }
}

/// Out-edges of `at` ordered fewest-turns-first relative to the arrival edge.
pub fn ordered_out_edges(
    network: &RoadNetwork,
    layout: Option<&GridLayout>,
    arrived_via: Option<EdgeId>,
    at: NodeId,
) -> Vec<EdgeId> {
    let mut out = network.out_edges(at).to_vec();
    if let (Some(layout), Some(via)) = (layout, arrived_via) {
        let prev = network.edge(via).tail;
        // Stable sort keeps node-id order among equal ranks.
        out.sort_by_key(|&e| layout.turn_rank(prev, at, network.edge(e).head));
    }
    out
}
