//! First-in-first-out trajectory coordination at a single intersection.
//!
//! Vehicles are planned in order of entry. Each plan starts from the
//! unconstrained cubic and is repaired against the already committed
//! vehicles: conflict-point headways first, then rear-end gaps on shared
//! road. Committed trajectories are never revised.

pub mod geometry;

use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EdgeKey, RoadNetwork};
use crate::trajectory::{
    check_rear_end, flow_modify, flow_modify_exit, resolve_lateral, resolve_rear_end,
    unconstrained_trajectory, validate_limits, BoundaryConditions, Limits, Trajectory,
    CONSTRAINT_SLACK,
};
use geometry::{IntersectionGeometry, PathId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinationParams {
    /// Minimum rear-end gap (m).
    pub delta_m: f64,
    /// Minimum time separation at a conflict point (s).
    pub tau_safe_s: f64,
    pub limits: Limits,
    /// Re-plans allowed before a vehicle is rejected.
    pub max_deferrals: usize,
    /// Exit-time step of the relaxation and delay searches (s).
    pub retime_step_s: f64,
    /// Largest exit delay tried before deferring (s).
    pub max_delay_s: f64,
}

impl Default for CoordinationParams {
    fn default() -> Self {
        Self {
            delta_m: 10.0,
            tau_safe_s: 2.0,
            limits: Limits::default(),
            max_deferrals: 10,
            retime_step_s: 0.25,
            max_delay_s: 30.0,
        }
    }
}

/// One vehicle's passage through the intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleLeg {
    pub vehicle: usize,
    pub path: PathId,
    pub t0: f64,
    pub tf: f64,
    pub v0: f64,
    pub vf: f64,
    /// Deferral slot, the reciprocal of the exit-edge flow (s).
    pub slot_s: f64,
    pub entry_edge: Option<EdgeKey>,
    pub exit_edge: Option<EdgeKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Unconstrained,
    Lateral,
    RearEnd,
    FlowModify,
    ExitModify,
    Delayed,
}

/// Travel durations fed back to the flow model after a re-timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub vehicle: usize,
    pub reason: String,
    pub entry_edge: Option<EdgeKey>,
    pub exit_edge: Option<EdgeKey>,
    pub entry_duration_s: f64,
    pub exit_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub trajectory: Trajectory,
    pub kind: PlanKind,
    /// The unconstrained plan violated a speed or acceleration limit and
    /// the exit time was relaxed.
    pub relaxed: bool,
    pub feedback: Option<FeedbackEvent>,
}

#[derive(Debug, Clone)]
struct Committed {
    vehicle: usize,
    path: PathId,
    trajectory: Trajectory,
    /// Crossing time per conflict id on this vehicle's path.
    crossings: BTreeMap<usize, f64>,
}

/// Committed vehicles at one intersection.
#[derive(Debug, Clone)]
pub struct CoordinatorState {
    geometry: IntersectionGeometry,
    params: CoordinationParams,
    committed: Vec<Committed>,
}

impl CoordinatorState {
    pub fn new(geometry: IntersectionGeometry, params: CoordinationParams) -> Self {
        Self {
            geometry,
            params,
            committed: Vec::new(),
        }
    }

    pub fn geometry(&self) -> &IntersectionGeometry {
        &self.geometry
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.committed.iter().map(|c| &c.trajectory)
    }

    /// Crossing times of committed vehicles at conflict `id`.
    pub fn crossing_times(&self, id: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .committed
            .iter()
            .filter_map(|c| c.crossings.get(&id).copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// A committed vehicle already on the shared road closer than the gap
    /// when `leg` enters. No re-timing of `leg` can fix that.
    fn entry_blocker(&self, leg: &VehicleLeg) -> Option<usize> {
        self.committed.iter().find_map(|c| {
            let (own, other, len) = self.geometry.shared_between(leg.path, c.path)?;
            if own > 0.0 || c.trajectory.t_start() > leg.t0 || c.trajectory.t_end() < leg.t0 {
                return None;
            }
            let ahead = c.trajectory.position(leg.t0) - other;
            (ahead >= 0.0 && ahead <= len && ahead < self.params.delta_m - CONSTRAINT_SLACK)
                .then_some(c.vehicle)
        })
    }

    fn last_on_path(&self, path: PathId) -> Option<&Committed> {
        self.committed.iter().rev().find(|c| c.path == path)
    }

    pub fn commit(&mut self, trajectory: Trajectory) -> Result<()> {
        let path = PathId(trajectory.path);
        let mut crossings = BTreeMap::new();
        for (id, s, _, _) in self.geometry.conflicts_of(path) {
            let t = trajectory.crossing_time(s).ok_or_else(|| {
                Error::Domain(format!(
                    "vehicle {} never reaches conflict {id}",
                    trajectory.vehicle
                ))
            })?;
            crossings.insert(id, t);
        }
        self.committed.push(Committed {
            vehicle: trajectory.vehicle,
            path,
            trajectory,
            crossings,
        });
        Ok(())
    }

    /// All violations of `traj` against the committed set.
    fn check(&self, traj: &Trajectory) -> Check {
        let path = PathId(traj.path);
        let tau = self.params.tau_safe_s;
        let mut lateral = Vec::new();
        for (id, s, other, _) in self.geometry.conflicts_of(path) {
            let Some(t) = traj.crossing_time(s) else {
                lateral.push((id, s));
                continue;
            };
            let bad = self
                .committed
                .iter()
                .filter(|c| c.path == other)
                .filter_map(|c| c.crossings.get(&id))
                .any(|&tp| (tp - t).abs() < tau - CONSTRAINT_SLACK);
            if bad {
                lateral.push((id, s));
            }
        }
        lateral.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut rear = Vec::new();
        for (k, c) in self.committed.iter().enumerate() {
            if let Some(gap) = shared_gap(&self.geometry, traj, &c.trajectory) {
                if gap < self.params.delta_m - CONSTRAINT_SLACK {
                    rear.push(k);
                }
            }
        }
        Check {
            limits_ok: validate_limits(traj, &self.params.limits).ok,
            lateral,
            rear,
        }
    }
}

struct Check {
    limits_ok: bool,
    /// Violated conflicts as `(id, own distance)`, nearest first.
    lateral: Vec<(usize, f64)>,
    /// Indices of committed vehicles with a rear-end violation.
    rear: Vec<usize>,
}

impl Check {
    fn ok(&self) -> bool {
        self.limits_ok && self.lateral.is_empty() && self.rear.is_empty()
    }
}

/// Time at which `traj` reaches `s`, treating the path ends exactly.
fn time_at(traj: &Trajectory, s: f64, path_len: f64) -> Option<f64> {
    if s <= 1e-12 {
        Some(traj.t_start())
    } else if s >= path_len - 1e-9 {
        Some(traj.t_end())
    } else {
        traj.crossing_time(s)
    }
}

/// Smallest leader-minus-follower distance while both vehicles are on the
/// road shared by their paths, or `None` if they never share it at the same time.
fn shared_gap(geometry: &IntersectionGeometry, a: &Trajectory, b: &Trajectory) -> Option<f64> {
    let (pa, pb) = (PathId(a.path), PathId(b.path));
    let (oa, ob, len) = geometry.shared_between(pa, pb)?;
    let (la, lb) = (geometry.path(pa).length_m, geometry.path(pb).length_m);
    let enter_a = time_at(a, oa, la)?;
    let enter_b = time_at(b, ob, lb)?;
    let exit_a = time_at(a, oa + len, la)?;
    let exit_b = time_at(b, ob + len, lb)?;
    let window = (enter_a.max(enter_b), exit_a.min(exit_b));
    if window.1 < window.0 {
        return None;
    }
    let (sa, sb) = (a.shifted(-oa), b.shifted(-ob));
    // Whoever reaches the shared road first leads on it.
    let gap = if enter_b <= enter_a {
        check_rear_end(&sa, &sb, window)
    } else {
        check_rear_end(&sb, &sa, window)
    };
    gap.is_finite().then_some(gap)
}

fn boundary(leg: &VehicleLeg, sf: f64, tf: f64, limits: Limits) -> BoundaryConditions {
    BoundaryConditions {
        t0: leg.t0,
        tf,
        v0: leg.v0,
        vf: leg.vf,
        sf,
        limits,
    }
}

/// Feedback durations split where the trajectory reaches `s_split`.
fn split_feedback(
    leg: &VehicleLeg,
    traj: &Trajectory,
    s_split: f64,
    reason: &str,
) -> FeedbackEvent {
    let t_mid = traj
        .crossing_time(s_split)
        .unwrap_or(0.5 * (traj.t_start() + traj.t_end()));
    FeedbackEvent {
        vehicle: leg.vehicle,
        reason: reason.to_string(),
        entry_edge: leg.entry_edge.clone(),
        exit_edge: leg.exit_edge.clone(),
        entry_duration_s: t_mid - traj.t_start(),
        exit_duration_s: traj.t_end() - t_mid,
    }
}

/// Plans `leg` against the committed vehicles within one exit time.
fn plan_with_exit(
    state: &CoordinatorState,
    leg: &VehicleLeg,
    tf: f64,
) -> Option<(Trajectory, PlanKind, Option<FeedbackEvent>)> {
    let p = &state.params;
    let sf = state.geometry.path(leg.path).length_m;
    let bc = boundary(leg, sf, tf, p.limits);
    let tag = |t: Trajectory| t.tagged(leg.vehicle, leg.path.0);
    let traj = tag(Trajectory::single(unconstrained_trajectory(&bc).ok()?));
    let check = state.check(&traj);
    if !check.limits_ok {
        return None;
    }
    if check.ok() {
        return Some((traj, PlanKind::Unconstrained, None));
    }
    let (traj, kind) = if let Some(&(id, s_c)) = check.lateral.first() {
        let occupied = state.crossing_times(id);
        let resolved = tag(resolve_lateral(&bc, s_c, &occupied, p.tau_safe_s).ok()?);
        (resolved, PlanKind::Lateral)
    } else {
        (traj, PlanKind::Unconstrained)
    };
    let check = state.check(&traj);
    if check.ok() {
        return Some((traj, kind, None));
    }
    if !check.lateral.is_empty() || kind == PlanKind::Lateral {
        return None;
    }
    // Rear-end repair is only attempted behind the vehicle directly ahead on the same path.
    let leader = state.last_on_path(leg.path)?;
    if !check
        .rear
        .iter()
        .all(|&k| state.committed[k].vehicle == leader.vehicle)
    {
        return None;
    }
    let lt = &leader.trajectory;
    let (repaired, kind, feedback) = if lt.junction().is_some() {
        match resolve_rear_end(&bc, lt, p.delta_m) {
            Ok(t) => (tag(t), PlanKind::RearEnd, None),
            Err(_) => {
                let m = flow_modify(&bc, lt, p.delta_m).ok()?;
                let fb = FeedbackEvent {
                    vehicle: leg.vehicle,
                    reason: "flow_modify".into(),
                    entry_edge: leg.entry_edge.clone(),
                    exit_edge: leg.exit_edge.clone(),
                    entry_duration_s: m.entry_duration,
                    exit_duration_s: m.exit_duration,
                };
                (tag(m.trajectory), PlanKind::FlowModify, Some(fb))
            }
        }
    } else {
        let m = flow_modify_exit(&bc, lt, p.delta_m, p.max_delay_s).ok()?;
        let t = tag(m.trajectory);
        let fb = (m.tau_new > 0.0).then(|| split_feedback(leg, &t, 0.5 * sf, "exit_modify"));
        (t, PlanKind::ExitModify, fb)
    };
    state
        .check(&repaired)
        .ok()
        .then_some((repaired, kind, feedback))
}

/// Plans one vehicle without committing it.
///
/// Fails with [`Error::HardInfeasible`] when no exit time up to
/// `max_delay_s` beyond the scheduled one admits a safe plan.
pub fn plan_vehicle(state: &CoordinatorState, leg: &VehicleLeg) -> Result<PlanOutcome> {
    let p = &state.params;
    let sf = state.geometry.path(leg.path).length_m;
    let base = boundary(leg, sf, leg.tf, p.limits);
    base.validate()?;
    if let Some(v) = state.entry_blocker(leg) {
        return Err(Error::HardInfeasible(format!(
            "vehicle {} enters less than {} m behind vehicle {v}",
            leg.vehicle, p.delta_m
        )));
    }
    let steps = (p.max_delay_s / p.retime_step_s).round() as usize;

    // Relax the exit time until the unconstrained cubic respects the limits.
    let mut tf = leg.tf;
    let mut relaxed = false;
    let limits_ok = |tf: f64| {
        unconstrained_trajectory(&base.with_exit_time(tf))
            .map(|s| validate_limits(&Trajectory::single(s), &p.limits).ok)
            .unwrap_or(false)
    };
    if !limits_ok(tf) {
        let found = (1..=steps).find_map(|k| {
            let d = k as f64 * p.retime_step_s;
            [leg.tf + d, leg.tf - d]
                .into_iter()
                .find(|&t| t > leg.t0 && limits_ok(t))
        });
        tf = found.ok_or_else(|| {
            Error::HardInfeasible(format!(
                "vehicle {}: no exit time satisfies the limits",
                leg.vehicle
            ))
        })?;
        relaxed = true;
    }

    let finish = |traj: Trajectory, kind: PlanKind, feedback: Option<FeedbackEvent>| {
        let feedback =
            feedback.or_else(|| relaxed.then(|| split_feedback(leg, &traj, 0.5 * sf, "limits")));
        PlanOutcome {
            trajectory: traj,
            kind,
            relaxed,
            feedback,
        }
    };
    if let Some((traj, kind, fb)) = plan_with_exit(state, leg, tf) {
        return Ok(finish(traj, kind, fb));
    }
    for k in 1..=steps {
        let t = tf + k as f64 * p.retime_step_s;
        if !limits_ok(t) {
            break;
        }
        if let Some((traj, kind, fb)) = plan_with_exit(state, leg, t) {
            let kind = if kind == PlanKind::Unconstrained {
                PlanKind::Delayed
            } else {
                kind
            };
            let fb = fb.or_else(|| Some(split_feedback(leg, &traj, 0.5 * sf, "delay")));
            return Ok(finish(traj, kind, fb));
        }
    }
    Err(Error::HardInfeasible(format!(
        "vehicle {}: no safe plan within {} s of the scheduled exit",
        leg.vehicle, p.max_delay_s
    )))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolutions {
    pub lateral: usize,
    pub rear_end: usize,
    pub flow_modify: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictAuditRow {
    pub conflict_id: usize,
    pub vehicle_a: usize,
    pub vehicle_b: usize,
    pub t_a_s: f64,
    pub t_b_s: f64,
    pub separation_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleEnergy {
    pub vehicle: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub vehicles: usize,
    pub total_energy: f64,
    pub per_vehicle_energy: Vec<VehicleEnergy>,
    /// Smallest rear-end gap over all vehicle pairs sharing road.
    pub min_gap_m: Option<f64>,
    /// Smallest time separation at any conflict point.
    pub min_headway_s: Option<f64>,
    pub resolutions: Resolutions,
    pub limit_relaxations: usize,
    pub feedback: Vec<FeedbackEvent>,
    pub deferrals: usize,
    pub deferred_vehicles: usize,
    pub hard_infeasibilities: usize,
    pub lateral_violations: usize,
    pub rear_end_violations: usize,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    #[serde(skip)]
    pub conflict_audit: Vec<ConflictAuditRow>,
}

impl SimReport {
    pub fn metrics_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization is infallible");
        s.push('\n');
        s
    }

    pub fn conflict_audit_csv(&self) -> String {
        let mut out = String::from("conflict_id,vehicle_a,vehicle_b,t_a_s,t_b_s,separation_s\n");
        for r in &self.conflict_audit {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.conflict_id, r.vehicle_a, r.vehicle_b, r.t_a_s, r.t_b_s, r.separation_s
            ));
        }
        out
    }

    pub fn safety_violations(&self) -> usize {
        self.lateral_violations + self.rear_end_violations
    }
}

/// Key ordering the planning queue by entry time, then vehicle id.
#[derive(Debug, Clone, PartialEq)]
struct QueueKey(f64, usize);

impl Eq for QueueKey {}

impl Ord for QueueKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Plans and commits every leg in entry order, deferring vehicles that
/// cannot be planned by one slot at a time.
pub fn simulate_intersection(
    geometry: &IntersectionGeometry,
    legs: &[VehicleLeg],
    params: &CoordinationParams,
) -> Result<SimReport> {
    params.limits.validate()?;
    let mut state = CoordinatorState::new(geometry.clone(), *params);
    let mut queue: BinaryHeap<(QueueKey, usize)> = BinaryHeap::new();
    let mut pending: Vec<VehicleLeg> = legs.to_vec();
    for (i, l) in pending.iter().enumerate() {
        if l.path.0 >= geometry.paths().len() {
            return Err(Error::Scenario(format!(
                "vehicle {} uses unknown path {}",
                l.vehicle, l.path.0
            )));
        }
        queue.push((QueueKey(l.t0, l.vehicle), i));
    }
    let mut deferrals = vec![0usize; pending.len()];
    let mut resolutions = Resolutions::default();
    let mut feedback = Vec::new();
    let mut relaxations = 0;
    let mut hard = 0;
    while let Some((_, i)) = queue.pop() {
        let leg = pending[i].clone();
        match plan_vehicle(&state, &leg) {
            Ok(out) => {
                match out.kind {
                    PlanKind::Lateral => resolutions.lateral += 1,
                    PlanKind::RearEnd => resolutions.rear_end += 1,
                    PlanKind::FlowModify | PlanKind::ExitModify | PlanKind::Delayed => {
                        resolutions.flow_modify += 1
                    }
                    PlanKind::Unconstrained => {}
                }
                if out.relaxed {
                    relaxations += 1;
                }
                feedback.extend(out.feedback);
                state.commit(out.trajectory)?;
            }
            Err(Error::HardInfeasible(reason)) => {
                hard += 1;
                deferrals[i] += 1;
                if deferrals[i] > params.max_deferrals {
                    return Err(Error::Scenario(format!(
                        "vehicle {} still infeasible after {} deferrals: {reason}",
                        leg.vehicle, params.max_deferrals
                    )));
                }
                log::debug!("deferring vehicle {}: {reason}", leg.vehicle);
                let l = &mut pending[i];
                l.t0 += l.slot_s;
                l.tf += l.slot_s;
                queue.push((QueueKey(l.t0, l.vehicle), i));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(build_report(
        &state,
        params,
        resolutions,
        feedback,
        relaxations,
        &deferrals,
        hard,
    ))
}

fn build_report(
    state: &CoordinatorState,
    params: &CoordinationParams,
    resolutions: Resolutions,
    feedback: Vec<FeedbackEvent>,
    limit_relaxations: usize,
    deferrals: &[usize],
    hard: usize,
) -> SimReport {
    let mut committed: Vec<&Committed> = state.committed.iter().collect();
    committed.sort_by_key(|c| c.vehicle);
    let per_vehicle_energy: Vec<VehicleEnergy> = committed
        .iter()
        .map(|c| VehicleEnergy {
            vehicle: c.vehicle,
            energy: c.trajectory.energy(),
        })
        .collect();
    let total_energy = per_vehicle_energy.iter().map(|e| e.energy).sum();

    let mut audit = Vec::new();
    let mut lateral_violations = 0;
    for conflict in state.geometry.conflicts() {
        let on = |p: PathId| {
            committed
                .iter()
                .filter(move |c| c.path == p)
                .filter_map(move |c| c.crossings.get(&conflict.id).map(|&t| (c.vehicle, t)))
        };
        for (va, ta) in on(conflict.path_a) {
            for (vb, tb) in on(conflict.path_b) {
                let sep = (ta - tb).abs();
                if sep < params.tau_safe_s - 1e-6 {
                    lateral_violations += 1;
                }
                audit.push(ConflictAuditRow {
                    conflict_id: conflict.id,
                    vehicle_a: va,
                    vehicle_b: vb,
                    t_a_s: ta,
                    t_b_s: tb,
                    separation_s: sep,
                });
            }
        }
    }
    let min_headway_s = audit.iter().map(|r| r.separation_s).reduce(f64::min);

    let mut min_gap: Option<f64> = None;
    let mut rear_end_violations = 0;
    for i in 0..committed.len() {
        for j in i + 1..committed.len() {
            if let Some(g) = shared_gap(
                &state.geometry,
                &committed[i].trajectory,
                &committed[j].trajectory,
            ) {
                if g < params.delta_m - 1e-6 {
                    rear_end_violations += 1;
                }
                min_gap = Some(min_gap.map_or(g, |m| m.min(g)));
            }
        }
    }
    SimReport {
        vehicles: committed.len(),
        total_energy,
        per_vehicle_energy,
        min_gap_m: min_gap,
        min_headway_s,
        resolutions,
        limit_relaxations,
        feedback,
        deferrals: deferrals.iter().sum(),
        deferred_vehicles: deferrals.iter().filter(|&&d| d > 0).count(),
        hard_infeasibilities: hard,
        lateral_violations,
        rear_end_violations,
        trajectories: committed.iter().map(|c| c.trajectory.clone()).collect(),
        conflict_audit: audit,
    }
}

/// Replaces free-flow times with fed-back durations. When an edge receives
/// several durations the largest one is used.
pub fn apply_flow_feedback(
    network: &RoadNetwork,
    updates: &[(EdgeKey, f64)],
) -> Result<RoadNetwork> {
    let mut merged: BTreeMap<&EdgeKey, f64> = BTreeMap::new();
    for (key, d) in updates {
        if !(d.is_finite() && *d > 0.0) {
            return Err(Error::Validation(format!(
                "feedback duration {d} for {key} must be positive"
            )));
        }
        let e = merged.entry(key).or_insert(*d);
        *e = e.max(*d);
    }
    let mut out = network.clone();
    for (key, d) in merged {
        let id = network
            .edge_by_names(&key.0, &key.1)
            .ok_or_else(|| Error::Validation(format!("feedback references unknown edge {key}")))?;
        out = out.with_free_flow_time(id, d)?;
    }
    Ok(out)
}

/// Flattens feedback events into per-edge duration updates.
pub fn feedback_updates(events: &[FeedbackEvent]) -> Vec<(EdgeKey, f64)> {
    let mut out = Vec::new();
    for ev in events {
        if let Some(k) = &ev.entry_edge {
            out.push((k.clone(), ev.entry_duration_s));
        }
        if let Some(k) = &ev.exit_edge {
            out.push((k.clone(), ev.exit_duration_s));
        }
    }
    out
}
