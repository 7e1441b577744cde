//! Two-piece trajectories through an interior point and the lateral
//! (conflict-point) resolution built on them.

use serde::{Deserialize, Serialize};

use super::{
    unconstrained_trajectory, validate_limits, BoundaryConditions, CubicSegment, JointKind,
    Trajectory, CONSTRAINT_SLACK, MIN_HORIZON,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorPoint {
    pub s_c: f64,
    pub t_c: f64,
    pub v_c: f64,
}

fn check_interior(bc: &BoundaryConditions, s_c: f64, t_c: f64) -> Result<()> {
    if !(t_c - bc.t0 >= MIN_HORIZON && bc.tf - t_c >= MIN_HORIZON) {
        return Err(Error::Domain(format!(
            "interior time {t_c} must lie strictly inside ({}, {})",
            bc.t0, bc.tf
        )));
    }
    if !(s_c > 0.0 && s_c < bc.sf) {
        return Err(Error::Domain(format!(
            "interior position {s_c} must lie inside (0, {})",
            bc.sf
        )));
    }
    Ok(())
}

/// Two cubics joined at `(t_c, s_c)` with common speed `v_c`.
pub fn segment_pair(bc: &BoundaryConditions, ip: &InteriorPoint) -> Result<Trajectory> {
    bc.validate()?;
    if !(ip.t_c - bc.t0 >= MIN_HORIZON && bc.tf - ip.t_c >= MIN_HORIZON) {
        return Err(Error::Degenerate(format!(
            "interior time {} too close to the boundary of ({}, {})",
            ip.t_c, bc.t0, bc.tf
        )));
    }
    check_interior(bc, ip.s_c, ip.t_c)?;
    let first = CubicSegment::between(bc.t0, 0.0, bc.v0, ip.t_c, ip.s_c, ip.v_c)?;
    let second = CubicSegment::between(ip.t_c, ip.s_c, ip.v_c, bc.tf, bc.sf, bc.vf)?;
    Ok(Trajectory {
        vehicle: 0,
        path: 0,
        segments: vec![first, second],
        joints: vec![JointKind::Interior],
    })
}

/// Energy of the two-piece trajectory through `(t_c, s_c)` at speed `v_c`.
pub fn interior_cost(bc: &BoundaryConditions, s_c: f64, t_c: f64, v_c: f64) -> Result<f64> {
    check_interior(bc, s_c, t_c)?;
    let (dtc, dtf) = (t_c - bc.t0, bc.tf - t_c);
    let dsf = bc.sf - s_c;
    let (v0, vf) = (bc.v0, bc.vf);
    let first = 2.0 / dtc.powi(3)
        * (dtc * dtc * (v_c * v_c + v_c * v0 + v0 * v0) - 3.0 * (v_c + v0) * dtc * s_c
            + 3.0 * s_c * s_c);
    let second = 2.0 / dtf.powi(3)
        * (dtf * dtf * (vf * vf + vf * v_c + v_c * v_c) - 3.0 * (vf + v_c) * dtf * dsf
            + 3.0 * dsf * dsf);
    Ok(first + second)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorSpeed {
    /// Minimizer clamped into the speed limits.
    pub v: f64,
    pub unclamped: f64,
    pub clamped: bool,
}

/// Minimizer over `v_c` of [`interior_cost`]; the cost is a convex quadratic in `v_c`.
pub fn optimal_interior_speed(
    bc: &BoundaryConditions,
    s_c: f64,
    t_c: f64,
) -> Result<InteriorSpeed> {
    check_interior(bc, s_c, t_c)?;
    let (dtc, dtf) = (t_c - bc.t0, bc.tf - t_c);
    let dsf = bc.sf - s_c;
    let num = 3.0 * (s_c * dtf * dtf + dsf * dtc * dtc) - dtc * dtf * (bc.v0 * dtf + bc.vf * dtc);
    let den = 2.0 * dtc * dtf * (dtf + dtc);
    let v = num / den;
    let c = v.clamp(bc.limits.v_min, bc.limits.v_max);
    Ok(InteriorSpeed {
        v: c,
        unclamped: v,
        clamped: c != v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unimodality {
    pub holds: bool,
    /// Smallest of the horizon bounds.
    pub bound_s: f64,
}

/// Sufficient conditions under which the interior cost, minimized over the
/// interior speed, has a single minimum in the interior time.
pub fn unimodality_conditions(bc: &BoundaryConditions, s_c: f64) -> Unimodality {
    let (v0, vf, sf) = (bc.v0, bc.vf, bc.sf);
    let dsf = sf - s_c;
    let bounds = [
        3.0 * sf / v0,
        3.0 * sf / vf,
        6.0 * s_c / v0,
        6.0 * dsf / vf,
        3.0 * dsf / vf * (1.0 + (v0 / vf).sqrt()),
        3.0 * s_c / v0 * (1.0 + (vf / v0).sqrt()),
    ];
    let bound_s = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    Unimodality {
        holds: bc.horizon() < bound_s,
        bound_s,
    }
}

/// Separation of `t` from the closest occupied crossing time.
fn separation(t: f64, occupied: &[f64]) -> f64 {
    occupied
        .iter()
        .map(|&p| (p - t).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Resolves a conflict-point headway violation at distance `s_c`.
///
/// Returns the unconstrained trajectory when its crossing already keeps
/// `tau_safe` from every occupied time. Otherwise the crossing is moved to
/// the cheapest feasible window boundary `t_p ± tau_safe`, with the interior
/// speed chosen optimally.
pub fn resolve_lateral(
    bc: &BoundaryConditions,
    s_c: f64,
    occupied: &[f64],
    tau_safe: f64,
) -> Result<Trajectory> {
    let seg = unconstrained_trajectory(bc)?;
    let base = Trajectory::single(seg);
    if !(s_c > 0.0 && s_c < bc.sf) {
        return Err(Error::Domain(format!(
            "conflict distance {s_c} must lie inside (0, {})",
            bc.sf
        )));
    }
    let crossing = base
        .crossing_time(s_c)
        .ok_or_else(|| Error::Domain(format!("trajectory never reaches {s_c} m")))?;
    if separation(crossing, occupied) >= tau_safe - CONSTRAINT_SLACK {
        return Ok(base);
    }
    let mut candidates: Vec<f64> = occupied
        .iter()
        .flat_map(|&p| [p - tau_safe, p + tau_safe])
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<(f64, f64, Trajectory)> = None;
    for t_c in candidates {
        if !(t_c - bc.t0 > MIN_HORIZON && bc.tf - t_c > MIN_HORIZON) {
            continue;
        }
        if separation(t_c, occupied) < tau_safe - CONSTRAINT_SLACK {
            continue;
        }
        let v = optimal_interior_speed(bc, s_c, t_c)?;
        let Ok(traj) = segment_pair(bc, &InteriorPoint { s_c, t_c, v_c: v.v }) else {
            continue;
        };
        if !validate_limits(&traj, &bc.limits).ok {
            continue;
        }
        let j = interior_cost(bc, s_c, t_c, v.v)?;
        // Candidates are visited in time order, so strict improvement keeps the earlier one on ties.
        if best.as_ref().is_none_or(|b| j < b.0) {
            best = Some((j, t_c, traj));
        }
    }
    best.map(|b| b.2).ok_or(Error::InfeasibleLateral { s_c })
}
