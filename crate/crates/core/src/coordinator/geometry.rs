//! Single-intersection geometry: twelve lane-level paths, their conflict
//! points and the segments they share.
//!
//! The canonical layout is a square box of side `L` centred at the origin
//! with right-hand traffic. Straight movements are chords, turns are
//! quarter-circle arcs. Every path also carries an approach leg before the
//! box and an exit leg after it, so path coordinates run depot to depot.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    North,
    East,
    South,
    West,
}

impl Arm {
    /// Counter-clockwise order starting from the south arm.
    pub const ALL: [Arm; 4] = [Arm::South, Arm::East, Arm::North, Arm::West];

    pub fn letter(self) -> char {
        match self {
            Arm::North => 'N',
            Arm::East => 'E',
            Arm::South => 'S',
            Arm::West => 'W',
        }
    }

    pub fn from_letter(s: &str) -> Option<Arm> {
        match s {
            "N" => Some(Arm::North),
            "E" => Some(Arm::East),
            "S" => Some(Arm::South),
            "W" => Some(Arm::West),
            _ => None,
        }
    }

    /// Unit vector pointing from the box centre out along this arm.
    pub fn outward(self) -> (f64, f64) {
        match self {
            Arm::North => (0.0, 1.0),
            Arm::East => (1.0, 0.0),
            Arm::South => (0.0, -1.0),
            Arm::West => (-1.0, 0.0),
        }
    }

    /// Arm whose outward direction dominates `(dx, dy)`.
    pub fn from_vector(dx: f64, dy: f64) -> Option<Arm> {
        if dx.abs() < 1e-12 && dy.abs() < 1e-12 || (dx.abs() - dy.abs()).abs() < 1e-12 {
            return None;
        }
        Some(if dx.abs() > dy.abs() {
            if dx > 0.0 {
                Arm::East
            } else {
                Arm::West
            }
        } else if dy > 0.0 {
            Arm::North
        } else {
            Arm::South
        })
    }

    /// Quarter turns counter-clockwise from the south arm.
    fn rotation(self) -> i32 {
        match self {
            Arm::South => 0,
            Arm::East => 1,
            Arm::North => 2,
            Arm::West => 3,
        }
    }

    pub fn opposite(self) -> Arm {
        Arm::ALL[((self.rotation() + 2) % 4) as usize]
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Movement {
    Right,
    Straight,
    Left,
}

impl Movement {
    pub fn of(entry: Arm, exit: Arm) -> Option<Movement> {
        match (exit.rotation() - entry.rotation()).rem_euclid(4) {
            1 => Some(Movement::Right),
            2 => Some(Movement::Straight),
            3 => Some(Movement::Left),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathInfo {
    pub entry: Arm,
    pub exit: Arm,
    pub length_m: f64,
}

/// Two paths cross at `s_a` along `path_a` and `s_b` along `path_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub id: usize,
    pub path_a: PathId,
    pub path_b: PathId,
    pub s_a: f64,
    pub s_b: f64,
}

/// A stretch of road traversed by both paths: `[offset_a, offset_a + length]`
/// on `path_a` coincides with `[offset_b, offset_b + length]` on `path_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedSegment {
    pub path_a: PathId,
    pub path_b: PathId,
    pub offset_a: f64,
    pub offset_b: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometryConfig {
    Canonical {
        #[serde(default = "default_box_side")]
        box_side_m: f64,
        #[serde(default = "default_lane_offset")]
        lane_offset_m: f64,
        /// Depot-to-centre distance; the approach and exit legs are this minus half the box.
        #[serde(default = "default_segment")]
        segment_length_m: f64,
    },
    Explicit {
        approach_m: f64,
        exit_m: f64,
        paths: Vec<ExplicitPath>,
        conflicts: Vec<ExplicitConflict>,
    },
}

fn default_box_side() -> f64 {
    30.0
}
fn default_lane_offset() -> f64 {
    3.75
}
fn default_segment() -> f64 {
    200.0
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig::Canonical {
            box_side_m: default_box_side(),
            lane_offset_m: default_lane_offset(),
            segment_length_m: default_segment(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPath {
    pub entry: Arm,
    pub exit: Arm,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitConflict {
    pub a: (Arm, Arm),
    pub b: (Arm, Arm),
    pub s_a_m: f64,
    pub s_b_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionGeometry {
    paths: Vec<PathInfo>,
    conflicts: Vec<Conflict>,
    shared: Vec<SharedSegment>,
    approach_m: f64,
    exit_m: f64,
}

impl IntersectionGeometry {
    pub fn paths(&self) -> &[PathInfo] {
        &self.paths
    }

    pub fn path(&self, id: PathId) -> &PathInfo {
        &self.paths[id.0]
    }

    pub fn path_id(&self, entry: Arm, exit: Arm) -> Option<PathId> {
        self.paths
            .iter()
            .position(|p| p.entry == entry && p.exit == exit)
            .map(PathId)
    }

    pub fn conflicts(&self) -> &[Conflict] {
        &self.conflicts
    }

    pub fn shared_segments(&self) -> &[SharedSegment] {
        &self.shared
    }

    pub fn approach_m(&self) -> f64 {
        self.approach_m
    }

    pub fn exit_m(&self) -> f64 {
        self.exit_m
    }

    /// Conflicts on `path` as `(conflict id, own distance, other path, other distance)`.
    pub fn conflicts_of(&self, path: PathId) -> Vec<(usize, f64, PathId, f64)> {
        self.conflicts
            .iter()
            .filter_map(|c| {
                if c.path_a == path {
                    Some((c.id, c.s_a, c.path_b, c.s_b))
                } else if c.path_b == path {
                    Some((c.id, c.s_b, c.path_a, c.s_a))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Shared segment between two paths, oriented so that the first offset
    /// belongs to `p`. A path shares its whole length with itself.
    pub fn shared_between(&self, p: PathId, q: PathId) -> Option<(f64, f64, f64)> {
        if p == q {
            return Some((0.0, 0.0, self.paths[p.0].length_m));
        }
        self.shared.iter().find_map(|s| {
            if s.path_a == p && s.path_b == q {
                Some((s.offset_a, s.offset_b, s.length))
            } else if s.path_a == q && s.path_b == p {
                Some((s.offset_b, s.offset_a, s.length))
            } else {
                None
            }
        })
    }

    /// Explicit form of this geometry, suitable for serialization.
    pub fn to_config(&self) -> GeometryConfig {
        GeometryConfig::Explicit {
            approach_m: self.approach_m,
            exit_m: self.exit_m,
            paths: self
                .paths
                .iter()
                .map(|p| ExplicitPath {
                    entry: p.entry,
                    exit: p.exit,
                    length_m: p.length_m,
                })
                .collect(),
            conflicts: self
                .conflicts
                .iter()
                .map(|c| {
                    let a = self.paths[c.path_a.0];
                    let b = self.paths[c.path_b.0];
                    ExplicitConflict {
                        a: (a.entry, a.exit),
                        b: (b.entry, b.exit),
                        s_a_m: c.s_a,
                        s_b_m: c.s_b,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Curve {
    Line {
        p0: (f64, f64),
        p1: (f64, f64),
    },
    /// Arc of `radius` around `center` from `start` (radians) through signed `sweep`.
    Arc {
        center: (f64, f64),
        radius: f64,
        start: f64,
        sweep: f64,
    },
}

impl Curve {
    fn length(&self) -> f64 {
        match *self {
            Curve::Line { p0, p1 } => (p1.0 - p0.0).hypot(p1.1 - p0.1),
            Curve::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn rotated(&self, quarter_turns: i32) -> Curve {
        let rot = |p: (f64, f64)| {
            let mut p = p;
            for _ in 0..quarter_turns.rem_euclid(4) {
                p = (-p.1, p.0);
            }
            p
        };
        match *self {
            Curve::Line { p0, p1 } => Curve::Line {
                p0: rot(p0),
                p1: rot(p1),
            },
            Curve::Arc {
                center,
                radius,
                start,
                sweep,
            } => Curve::Arc {
                center: rot(center),
                radius,
                start: start + FRAC_PI_2 * quarter_turns as f64,
                sweep,
            },
        }
    }

    /// Arc-length parameter of a point known to lie on the underlying line or
    /// circle, or `None` when it falls outside the curve.
    fn param_of(&self, p: (f64, f64)) -> Option<f64> {
        const EPS: f64 = 1e-9;
        match *self {
            Curve::Line { p0, p1 } => {
                let len = self.length();
                let t = ((p.0 - p0.0) * (p1.0 - p0.0) + (p.1 - p0.1) * (p1.1 - p0.1)) / len;
                (t > -EPS && t < len + EPS).then_some(t.clamp(0.0, len))
            }
            Curve::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                let theta = (p.1 - center.1).atan2(p.0 - center.0);
                let rel = ((theta - start) * sweep.signum()).rem_euclid(2.0 * PI);
                let rel = if rel > 2.0 * PI - EPS { 0.0 } else { rel };
                (rel <= sweep.abs() + EPS).then_some(radius * rel.min(sweep.abs()))
            }
        }
    }

    /// Candidate intersection points of the underlying lines/circles.
    fn raw_intersections(&self, other: &Curve) -> Vec<(f64, f64)> {
        match (*self, *other) {
            (Curve::Line { p0, p1 }, Curve::Line { p0: q0, p1: q1 }) => {
                let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
                let (ex, ey) = (q1.0 - q0.0, q1.1 - q0.1);
                let den = dx * ey - dy * ex;
                if den.abs() < 1e-12 {
                    return Vec::new();
                }
                let t = ((q0.0 - p0.0) * ey - (q0.1 - p0.1) * ex) / den;
                vec![(p0.0 + t * dx, p0.1 + t * dy)]
            }
            (Curve::Line { p0, p1 }, Curve::Arc { center, radius, .. })
            | (Curve::Arc { center, radius, .. }, Curve::Line { p0, p1 }) => {
                let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
                let (fx, fy) = (p0.0 - center.0, p0.1 - center.1);
                let a = dx * dx + dy * dy;
                let b = 2.0 * (fx * dx + fy * dy);
                let c = fx * fx + fy * fy - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return Vec::new();
                }
                let sq = disc.sqrt();
                [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
                    .iter()
                    .map(|t| (p0.0 + t * dx, p0.1 + t * dy))
                    .collect()
            }
            (
                Curve::Arc {
                    center: c0,
                    radius: r0,
                    ..
                },
                Curve::Arc {
                    center: c1,
                    radius: r1,
                    ..
                },
            ) => {
                let (dx, dy) = (c1.0 - c0.0, c1.1 - c0.1);
                let d = dx.hypot(dy);
                if d < 1e-12 || d > r0 + r1 || d < (r0 - r1).abs() {
                    return Vec::new();
                }
                let a = (r0 * r0 - r1 * r1 + d * d) / (2.0 * d);
                let h = (r0 * r0 - a * a).max(0.0).sqrt();
                let (mx, my) = (c0.0 + a * dx / d, c0.1 + a * dy / d);
                vec![
                    (mx - h * dy / d, my + h * dx / d),
                    (mx + h * dy / d, my - h * dx / d),
                ]
            }
        }
    }
}

/// In-box curve of the movement from the south arm, before rotation.
fn canonical_curve(movement: Movement, half: f64, w: f64) -> Curve {
    match movement {
        Movement::Straight => Curve::Line {
            p0: (w, -half),
            p1: (w, half),
        },
        Movement::Right => Curve::Arc {
            center: (half, -half),
            radius: half - w,
            start: PI,
            sweep: -FRAC_PI_2,
        },
        Movement::Left => Curve::Arc {
            center: (-half, -half),
            radius: half + w,
            start: 0.0,
            sweep: FRAC_PI_2,
        },
    }
}

fn all_movements() -> Vec<(Arm, Arm)> {
    let mut out = Vec::with_capacity(12);
    for entry in Arm::ALL {
        for exit in Arm::ALL {
            if exit != entry {
                out.push((entry, exit));
            }
        }
    }
    out
}

fn shared_segments(paths: &[PathInfo], approach: f64, exit: f64) -> Vec<SharedSegment> {
    let mut shared = Vec::new();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            let (a, b) = (paths[i], paths[j]);
            if a.entry == b.entry {
                shared.push(SharedSegment {
                    path_a: PathId(i),
                    path_b: PathId(j),
                    offset_a: 0.0,
                    offset_b: 0.0,
                    length: approach,
                });
            } else if a.exit == b.exit {
                shared.push(SharedSegment {
                    path_a: PathId(i),
                    path_b: PathId(j),
                    offset_a: a.length_m - exit,
                    offset_b: b.length_m - exit,
                    length: exit,
                });
            }
        }
    }
    shared
}

/// Builds the path, conflict and shared-segment tables.
pub fn build_conflict_table(config: &GeometryConfig) -> Result<IntersectionGeometry> {
    match config {
        GeometryConfig::Canonical {
            box_side_m,
            lane_offset_m,
            segment_length_m,
        } => canonical(*box_side_m, *lane_offset_m, *segment_length_m),
        GeometryConfig::Explicit {
            approach_m,
            exit_m,
            paths,
            conflicts,
        } => explicit(*approach_m, *exit_m, paths, conflicts),
    }
}

fn canonical(side: f64, w: f64, segment: f64) -> Result<IntersectionGeometry> {
    let half = side / 2.0;
    if !(side > 0.0 && w >= 0.0 && w < half) {
        return Err(Error::Geometry(format!(
            "lane offset {w} must lie in [0, {half}) for box side {side}"
        )));
    }
    if !(segment > half) {
        return Err(Error::Geometry(
            "segment length must exceed half the box side".into(),
        ));
    }
    let leg = segment - half;
    let movements = all_movements();
    let curves: Vec<Curve> = movements
        .iter()
        .map(|&(entry, exit)| {
            let m = Movement::of(entry, exit).expect("no u-turns");
            canonical_curve(m, half, w).rotated(entry.rotation())
        })
        .collect();
    let paths: Vec<PathInfo> = movements
        .iter()
        .zip(&curves)
        .map(|(&(entry, exit), c)| PathInfo {
            entry,
            exit,
            length_m: 2.0 * leg + c.length(),
        })
        .collect();
    let mut conflicts = Vec::new();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            if paths[i].entry == paths[j].entry || paths[i].exit == paths[j].exit {
                continue;
            }
            let (ci, cj) = (&curves[i], &curves[j]);
            let mut found: Vec<(f64, f64)> = Vec::new();
            for p in ci.raw_intersections(cj) {
                let (Some(si), Some(sj)) = (ci.param_of(p), cj.param_of(p)) else {
                    continue;
                };
                let inside = |s: f64, c: &Curve| s > 1e-6 && s < c.length() - 1e-6;
                if inside(si, ci)
                    && inside(sj, cj)
                    && !found.iter().any(|f| (f.0 - si).abs() < 1e-6)
                {
                    found.push((si, sj));
                }
            }
            found.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (si, sj) in found {
                conflicts.push(Conflict {
                    id: conflicts.len(),
                    path_a: PathId(i),
                    path_b: PathId(j),
                    s_a: leg + si,
                    s_b: leg + sj,
                });
            }
        }
    }
    let shared = shared_segments(&paths, leg, leg);
    Ok(IntersectionGeometry {
        paths,
        conflicts,
        shared,
        approach_m: leg,
        exit_m: leg,
    })
}

fn explicit(
    approach: f64,
    exit: f64,
    paths_in: &[ExplicitPath],
    conflicts_in: &[ExplicitConflict],
) -> Result<IntersectionGeometry> {
    if !(approach > 0.0 && exit > 0.0) {
        return Err(Error::Geometry(
            "approach and exit legs must be positive".into(),
        ));
    }
    let mut paths: Vec<PathInfo> = Vec::with_capacity(12);
    for (entry, exit_arm) in all_movements() {
        let matching: Vec<&ExplicitPath> = paths_in
            .iter()
            .filter(|p| p.entry == entry && p.exit == exit_arm)
            .collect();
        let p = match matching.as_slice() {
            [p] => *p,
            [] => return Err(Error::Geometry(format!("missing path {entry}->{exit_arm}"))),
            _ => {
                return Err(Error::Geometry(format!(
                    "duplicate path {entry}->{exit_arm}"
                )))
            }
        };
        if !(p.length_m > approach + exit) {
            return Err(Error::Geometry(format!(
                "path {entry}->{exit_arm} is shorter than its approach and exit legs"
            )));
        }
        paths.push(PathInfo {
            entry,
            exit: exit_arm,
            length_m: p.length_m,
        });
    }
    if let Some(p) = paths_in.iter().find(|p| p.entry == p.exit) {
        return Err(Error::Geometry(format!(
            "u-turn path {}->{} is not allowed",
            p.entry, p.exit
        )));
    }
    let find = |(e, x): (Arm, Arm)| {
        paths
            .iter()
            .position(|p| p.entry == e && p.exit == x)
            .map(PathId)
            .ok_or_else(|| Error::Geometry(format!("conflict references unknown path {e}->{x}")))
    };
    let mut conflicts = Vec::with_capacity(conflicts_in.len());
    for c in conflicts_in {
        let (a, b) = (find(c.a)?, find(c.b)?);
        let (pa, pb) = (paths[a.0], paths[b.0]);
        if a == b || pa.entry == pb.entry || pa.exit == pb.exit {
            return Err(Error::Geometry(format!(
                "paths {}->{} and {}->{} do not cross",
                pa.entry, pa.exit, pb.entry, pb.exit
            )));
        }
        for (s, p) in [(c.s_a_m, pa), (c.s_b_m, pb)] {
            if !(s > approach && s < p.length_m - exit) {
                return Err(Error::Geometry(format!(
                    "conflict distance {s} lies outside the box section of path {}->{}",
                    p.entry, p.exit
                )));
            }
        }
        conflicts.push(Conflict {
            id: conflicts.len(),
            path_a: a,
            path_b: b,
            s_a: c.s_a_m,
            s_b: c.s_b_m,
        });
    }
    let shared = shared_segments(&paths, approach, exit);
    Ok(IntersectionGeometry {
        paths,
        conflicts,
        shared,
        approach_m: approach,
        exit_m: exit,
    })
}
