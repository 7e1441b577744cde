//! Rear-end safety on a shared path coordinate: exact gap checks, the
//! junction construction behind a decelerating leader, and the minimal
//! re-timing used when that construction fails.

use serde::{Deserialize, Serialize};

use super::{
    optimal_interior_speed, segment_pair, unconstrained_trajectory, BoundaryConditions,
    CubicSegment, InteriorPoint, JointKind, Trajectory, CONSTRAINT_SLACK, MIN_HORIZON,
};
use crate::error::{Error, Result};

/// Tolerance on the leading factor of the junction test.
const ROOT_TEST_TOL: f64 = 1e-12;
/// Scan resolution used before bisecting.
const SCAN_STEPS: usize = 256;
/// Bisection tolerance on times.
const BISECT_TOL: f64 = 1e-6;

/// Minimum of `leader(t) - follower(t)` over `window` intersected with both domains.
///
/// Each piece of the difference is a cubic, so the minimum is taken over
/// piece ends and the roots of its derivative. Returns `+inf` when the
/// window does not overlap both trajectories.
pub fn check_rear_end(follower: &Trajectory, leader: &Trajectory, window: (f64, f64)) -> f64 {
    let lo = window.0.max(follower.t_start()).max(leader.t_start());
    let hi = window.1.min(follower.t_end()).min(leader.t_end());
    if !(hi >= lo) {
        return f64::INFINITY;
    }
    let mut knots = vec![lo, hi];
    for s in follower.segments.iter().chain(&leader.segments) {
        for t in [s.t_start, s.t_end] {
            if t > lo && t < hi {
                knots.push(t);
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut best = f64::INFINITY;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let f = piece_at(follower, mid);
        let l = piece_at(leader, mid);
        let diff = l.around(a).sub(&f.around(a));
        best = best.min(diff.min_on(0.0, b - a).0);
    }
    if knots.len() == 1 {
        best = leader.position(lo) - follower.position(lo);
    }
    best
}

fn piece_at(traj: &Trajectory, t: f64) -> &CubicSegment {
    traj.segments
        .iter()
        .find(|s| t >= s.t_start && t <= s.t_end)
        .unwrap_or_else(|| {
            if t < traj.t_start() {
                &traj.segments[0]
            } else {
                &traj.segments[traj.segments.len() - 1]
            }
        })
}

fn leader_piece_before(leader: &Trajectory, t: f64) -> Result<&CubicSegment> {
    leader
        .segments
        .iter()
        .find(|s| t > s.t_start && t <= s.t_end + 1e-12)
        .ok_or_else(|| {
            Error::InfeasibleRearEnd(format!("leader is not on the path just before {t}"))
        })
}

/// Factored test of the first piece of a junctioned trajectory.
///
/// `h(t) = s_p(t) - delta - s_n(t)` vanishes at the junction time, so
/// `h(σ) = σ q(σ)` with `σ = t - t_J` and a quadratic `q`. The piece is
/// feasible when `q ≤ 0` on `[t_0 - t_J, 0]`, which is the same as `q` having
/// no sign change there.
pub fn junction_first_piece_feasible(
    first: &CubicSegment,
    leader: &Trajectory,
    delta: f64,
) -> Result<bool> {
    let t_j = first.t_end;
    let lead = leader_piece_before(leader, t_j)?;
    let lo = first.t_start.max(lead.t_start);
    let h = lead.around(t_j).sub(&first.around(t_j)).add_const(-delta);
    // Drop the zero constant term and divide by σ.
    let q = crate::poly::Cubic::new(h.c[1], h.c[2], h.c[3], 0.0);
    let scale = 1.0 + h.c[1].abs() + h.c[2].abs() * (t_j - lo) + h.c[3].abs() * (t_j - lo).powi(2);
    let (max_q, _) = q.max_on(lo - t_j, 0.0);
    let first_ok = max_q <= ROOT_TEST_TOL * scale;
    // Before the leader's piece starts the follower must still be clear.
    let head_ok = lo <= first.t_start || {
        let early = Trajectory::single(*first);
        check_rear_end(&early, leader, (first.t_start, lo)) >= delta - CONSTRAINT_SLACK
    };
    Ok(first_ok && head_ok)
}

/// Two-piece follower trajectory joined at `(t_J, s_J - delta)` behind a
/// leader whose own trajectory has a junction at `(t_J, s_J)`.
///
/// `leader` must already be expressed in the follower's path coordinate.
pub fn resolve_rear_end(
    bc: &BoundaryConditions,
    leader: &Trajectory,
    delta: f64,
) -> Result<Trajectory> {
    bc.validate()?;
    let (t_j, s_j) = leader
        .junction()
        .ok_or_else(|| Error::Domain("leader trajectory has no junction".into()))?;
    let s_c = s_j - delta;
    if !(t_j - bc.t0 >= MIN_HORIZON && bc.tf - t_j >= MIN_HORIZON) {
        return Err(Error::InfeasibleRearEnd(format!(
            "leader junction time {t_j} is outside ({}, {})",
            bc.t0, bc.tf
        )));
    }
    if !(s_c > 0.0 && s_c < bc.sf) {
        return Err(Error::InfeasibleRearEnd(format!(
            "junction position {s_c} is outside the path"
        )));
    }
    let v = optimal_interior_speed(bc, s_c, t_j)?;
    let traj = segment_pair(
        bc,
        &InteriorPoint {
            s_c,
            t_c: t_j,
            v_c: v.v,
        },
    )?;
    if !junction_first_piece_feasible(&traj.segments[0], leader, delta)? {
        return Err(Error::InfeasibleRearEnd(format!(
            "first piece to ({t_j:.3} s, {s_c:.3} m) crosses the safety boundary"
        )));
    }
    let tail_gap = check_rear_end(&traj, leader, (t_j, bc.tf));
    if tail_gap < delta - CONSTRAINT_SLACK {
        return Err(Error::InfeasibleRearEnd(format!(
            "second piece gap {tail_gap:.6} m is below {delta} m"
        )));
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModification {
    /// New junction time.
    pub t_c: f64,
    /// Delay of the junction and of the exit relative to the original plan.
    pub tau_new: f64,
    pub trajectory: Trajectory,
    /// Entry-leg duration `t_c - t_0`.
    pub entry_duration: f64,
    /// Exit-leg duration `t_f + tau_new - t_c`.
    pub exit_duration: f64,
}

/// Delays the junction until the first piece clears the leader.
///
/// Searches the smallest `t_c ≥ t_J` such that the cubic from `(t_0, 0, v_0)`
/// to `(t_c, s_J - delta, v_c*)` keeps at least `delta` behind the leader.
/// The exit is delayed by the same amount, `tau_new = t_c - t_J`.
pub fn flow_modify(
    bc: &BoundaryConditions,
    leader: &Trajectory,
    delta: f64,
) -> Result<FlowModification> {
    bc.validate()?;
    let (t_j, s_j) = leader
        .junction()
        .ok_or_else(|| Error::Domain("leader trajectory has no junction".into()))?;
    let s_c = s_j - delta;
    if !(s_c > 0.0 && s_c < bc.sf) {
        return Err(Error::HardInfeasible(format!(
            "junction position {s_c} is outside the path"
        )));
    }
    if !(t_j - bc.t0 >= MIN_HORIZON) {
        return Err(Error::HardInfeasible(format!(
            "leader junction {t_j} precedes the entry {}",
            bc.t0
        )));
    }
    let tail = bc.tf - t_j;
    if !(tail >= MIN_HORIZON) {
        return Err(Error::HardInfeasible(
            "no time left after the leader junction".into(),
        ));
    }
    let plan = |t_c: f64| -> Result<(BoundaryConditions, CubicSegment, f64)> {
        let shifted = bc.with_exit_time(t_c + tail);
        let v = optimal_interior_speed(&shifted, s_c, t_c)?;
        let first = CubicSegment::between(bc.t0, 0.0, bc.v0, t_c, s_c, v.v)?;
        Ok((shifted, first, v.v))
    };
    let feasible = |t_c: f64| -> bool {
        plan(t_c).is_ok_and(|(_, first, _)| {
            check_rear_end(&Trajectory::single(first), leader, (bc.t0, t_c))
                >= delta - CONSTRAINT_SLACK
        })
    };
    let step = tail / SCAN_STEPS as f64;
    let mut found = None;
    if feasible(t_j) {
        found = Some(t_j);
    } else {
        let mut prev = t_j;
        for k in 1..=SCAN_STEPS {
            let t = t_j + k as f64 * step;
            if feasible(t) {
                let (mut lo, mut hi) = (prev, t);
                while hi - lo > BISECT_TOL {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                found = Some(hi);
                break;
            }
            prev = t;
        }
    }
    let t_c = found.ok_or_else(|| {
        Error::HardInfeasible(format!(
            "no junction time in [{t_j:.3}, {:.3}] clears the leader",
            bc.tf
        ))
    })?;
    let (shifted, _, v_c) = plan(t_c)?;
    let tau_new = t_c - t_j;
    let trajectory = segment_pair(&shifted, &InteriorPoint { s_c, t_c, v_c })?;
    Ok(FlowModification {
        t_c,
        tau_new,
        trajectory,
        entry_duration: t_c - bc.t0,
        exit_duration: bc.tf + tau_new - t_c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitModification {
    pub t_f: f64,
    pub tau_new: f64,
    pub trajectory: Trajectory,
}

/// Single-cubic variant of [`flow_modify`]: the smallest exit time `t_f' ≥ t_f`
/// whose unconstrained cubic keeps at least `delta` behind the leader.
/// Delays up to `max_delay` are searched.
pub fn flow_modify_exit(
    bc: &BoundaryConditions,
    leader: &Trajectory,
    delta: f64,
    max_delay: f64,
) -> Result<ExitModification> {
    bc.validate()?;
    let trial = |tf: f64| -> Option<Trajectory> {
        let tr = Trajectory::single(unconstrained_trajectory(&bc.with_exit_time(tf)).ok()?);
        (check_rear_end(&tr, leader, (bc.t0, tf)) >= delta - CONSTRAINT_SLACK).then_some(tr)
    };
    let found = if trial(bc.tf).is_some() {
        Some(bc.tf)
    } else {
        let step = max_delay / SCAN_STEPS as f64;
        let mut prev = bc.tf;
        let mut hit = None;
        for k in 1..=SCAN_STEPS {
            let t = bc.tf + k as f64 * step;
            if trial(t).is_some() {
                let (mut lo, mut hi) = (prev, t);
                while hi - lo > BISECT_TOL {
                    let mid = 0.5 * (lo + hi);
                    if trial(mid).is_some() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hit = Some(hi);
                break;
            }
            prev = t;
        }
        hit
    };
    let t_f = found.ok_or_else(|| {
        Error::HardInfeasible(format!(
            "no exit time within {max_delay:.3} s of {:.3} clears the leader",
            bc.tf
        ))
    })?;
    let trajectory = trial(t_f).expect("found exit time is feasible");
    Ok(ExitModification {
        t_f,
        tau_new: t_f - bc.tf,
        trajectory,
    })
}

/// Three-arc candidate: a cubic up to `t_in`, the leader's trajectory shifted
/// back by `delta` until `t_out`, and a cubic to the exit.
pub fn boundary_candidate(
    bc: &BoundaryConditions,
    leader: &Trajectory,
    delta: f64,
    t_in: f64,
    t_out: f64,
) -> Result<Trajectory> {
    bc.validate()?;
    if !(t_in - bc.t0 >= MIN_HORIZON && t_out > t_in && bc.tf - t_out >= MIN_HORIZON) {
        return Err(Error::Domain(
            "constrained arc must lie strictly inside the horizon".into(),
        ));
    }
    if !(t_in >= leader.t_start() && t_out <= leader.t_end()) {
        return Err(Error::Domain(
            "constrained arc must lie inside the leader's domain".into(),
        ));
    }
    let shadow = leader.shifted(-delta);
    let first = CubicSegment::between(
        bc.t0,
        0.0,
        bc.v0,
        t_in,
        shadow.position(t_in),
        shadow.speed(t_in),
    )?;
    let last = CubicSegment::between(
        t_out,
        shadow.position(t_out),
        shadow.speed(t_out),
        bc.tf,
        bc.sf,
        bc.vf,
    )?;
    let mut segments = vec![first];
    let mut joints = vec![JointKind::ConstrainedArc];
    for s in &shadow.segments {
        let (a, b) = (s.t_start.max(t_in), s.t_end.min(t_out));
        if b <= a {
            continue;
        }
        // Re-anchor the piece at its clipped start.
        let local = s.around(a);
        if segments.len() > 1 {
            joints.push(JointKind::Interior);
        }
        segments.push(CubicSegment {
            a: local.c[3],
            b: local.c[2],
            c: local.c[1],
            d: 0.0,
            t_start: a,
            t_end: b,
            s_offset: local.c[0],
        });
    }
    segments.push(last);
    joints.push(JointKind::ConstrainedArc);
    Ok(Trajectory {
        vehicle: 0,
        path: 0,
        segments,
        joints,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{resolve_lateral, Limits};
    use super::*;

    fn bc(t0: f64, tf: f64, v0: f64, vf: f64, sf: f64) -> BoundaryConditions {
        BoundaryConditions {
            t0,
            tf,
            v0,
            vf,
            sf,
            limits: Limits::default(),
        }
    }

    fn cruise(t0: f64, v: f64, sf: f64) -> Trajectory {
        Trajectory::single(unconstrained_trajectory(&bc(t0, t0 + sf / v, v, v, sf)).unwrap())
    }

    #[test]
    fn rigid_translation_gap() {
        let leader = cruise(0.0, 10.0, 400.0);
        let follower = cruise(2.5, 10.0, 400.0);
        let g = check_rear_end(&follower, &leader, (f64::NEG_INFINITY, f64::INFINITY));
        assert!((g - 25.0).abs() < 1e-9);
    }

    #[test]
    fn gap_matches_dense_sampling() {
        let leader =
            resolve_lateral(&bc(0.0, 40.0, 10.0, 10.0, 400.0), 200.0, &[19.0], 2.0).unwrap();
        let follower = Trajectory::single(
            unconstrained_trajectory(&bc(2.0, 41.0, 10.0, 10.0, 400.0)).unwrap(),
        );
        let exact = check_rear_end(&follower, &leader, (2.0, 40.0));
        let mut sampled = f64::INFINITY;
        let mut t = 2.0;
        while t <= 40.0 {
            sampled = sampled.min(leader.position(t) - follower.position(t));
            t += 1e-3;
        }
        assert!(exact <= sampled + 1e-9);
        assert!(sampled - exact < 1e-5);
    }

    /// Leader that slows down to cross late and then accelerates.
    fn dipping_leader() -> Trajectory {
        resolve_lateral(&bc(0.0, 40.0, 10.0, 10.0, 400.0), 200.0, &[19.8], 2.0).unwrap()
    }

    /// Follower entering at `t0` whose exit time makes its junction speed
    /// equal to the leader's, so the gap touches `delta` only at the junction.
    fn matched_follower(leader: &Trajectory, t0: f64) -> BoundaryConditions {
        let (t_j, s_j) = leader.junction().unwrap();
        let v_p = leader.speed(t_j);
        let miss = |tf: f64| {
            optimal_interior_speed(&bc(t0, tf, 10.0, 10.0, 400.0), s_j - 10.0, t_j)
                .unwrap()
                .unclamped
                - v_p
        };
        let (mut lo, mut hi) = (t_j + 1.0, t_j + 60.0);
        assert!(miss(lo) * miss(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if miss(mid) * miss(lo) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        bc(t0, lo, 10.0, 10.0, 400.0)
    }

    #[test]
    fn junction_behind_dipping_leader() {
        let leader = dipping_leader();
        let (t_j, _) = leader.junction().unwrap();
        assert!(t_j > 20.0);
        let f_bc = matched_follower(&leader, 2.0);
        let tr = resolve_rear_end(&f_bc, &leader, 10.0).unwrap();
        let gap = check_rear_end(&tr, &leader, (2.0, 40.0));
        assert!(gap >= 10.0 - 1e-9, "gap {gap}");
    }

    #[test]
    fn mismatched_junction_speed_is_rejected() {
        let leader = dipping_leader();
        assert!(resolve_rear_end(&bc(2.0, 43.0, 10.0, 10.0, 400.0), &leader, 10.0).is_err());
        assert!(resolve_rear_end(&bc(2.0, 41.0, 10.0, 10.0, 400.0), &leader, 10.0).is_err());
    }

    #[test]
    fn junction_requires_a_two_piece_leader() {
        let leader = cruise(0.0, 10.0, 400.0);
        assert!(matches!(
            resolve_rear_end(&bc(2.0, 42.0, 10.0, 10.0, 400.0), &leader, 10.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn flow_modify_on_feasible_input_is_identity() {
        let leader = dipping_leader();
        let f_bc = matched_follower(&leader, 2.0);
        let junctioned = resolve_rear_end(&f_bc, &leader, 10.0).unwrap();
        let m = flow_modify(&f_bc, &leader, 10.0).unwrap();
        assert_eq!(m.tau_new, 0.0);
        assert_eq!(m.trajectory, junctioned);
    }

    #[test]
    fn flow_modify_restores_the_gap() {
        let leader = dipping_leader();
        let f_bc = bc(2.0, 43.0, 10.0, 10.0, 400.0);
        assert!(resolve_rear_end(&f_bc, &leader, 10.0).is_err());
        let m = flow_modify(&f_bc, &leader, 10.0).unwrap();
        assert!(m.tau_new > 0.0);
        let gap = check_rear_end(&m.trajectory, &leader, (f_bc.t0, m.t_c));
        assert!(gap >= 10.0 - 1e-6, "gap {gap}");
        assert!((m.entry_duration + m.exit_duration - (f_bc.horizon() + m.tau_new)).abs() < 1e-9);
        // One millisecond earlier the first piece crosses the boundary.
        let (_, s_j) = leader.junction().unwrap();
        let t = m.t_c - 1e-3;
        let shifted = f_bc.with_exit_time(f_bc.tf + m.tau_new - 1e-3);
        let v = optimal_interior_speed(&shifted, s_j - 10.0, t).unwrap();
        let first = CubicSegment::between(2.0, 0.0, 10.0, t, s_j - 10.0, v.v).unwrap();
        assert!(check_rear_end(&Trajectory::single(first), &leader, (2.0, t)) < 10.0 - 1e-9);
    }

    #[test]
    fn exit_modification_delays_the_follower() {
        let leader = cruise(0.0, 10.0, 400.0);
        let f_bc = bc(1.2, 37.0, 10.0, 10.0, 400.0);
        let m = flow_modify_exit(&f_bc, &leader, 10.0, 20.0).unwrap();
        assert!(m.tau_new > 0.0);
        let gap = check_rear_end(&m.trajectory, &leader, (1.2, 40.0));
        assert!(gap >= 10.0 - 1e-9);
    }

    #[test]
    fn candidate_joins_the_shadow() {
        let leader = dipping_leader();
        let f_bc = bc(2.0, 43.0, 10.0, 10.0, 400.0);
        let (t_j, _) = leader.junction().unwrap();
        let cand = boundary_candidate(&f_bc, &leader, 10.0, t_j - 3.0, t_j + 3.0).unwrap();
        assert!(cand.continuity_error() < 1e-9);
        assert!((cand.position(t_j) - (leader.position(t_j) - 10.0)).abs() < 1e-9);
        assert!((cand.position(43.0) - 400.0).abs() < 1e-9);
    }
}
