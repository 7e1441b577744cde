//! Energy-optimal trajectories of a double integrator along a fixed path.
//!
//! With the cost `1/2 ∫ u^2` and boundary positions and speeds fixed, the
//! optimal unconstrained position profile is a cubic in time. Constrained
//! problems are solved by joining such cubics at interior points.

mod interior;
mod rear_end;

pub use interior::{
    interior_cost, optimal_interior_speed, resolve_lateral, segment_pair, unimodality_conditions,
    InteriorPoint, InteriorSpeed, Unimodality,
};
pub use rear_end::{
    boundary_candidate, check_rear_end, flow_modify, flow_modify_exit,
    junction_first_piece_feasible, resolve_rear_end, ExitModification, FlowModification,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Cubic;

/// Shortest horizon accepted by the constructors.
pub const MIN_HORIZON: f64 = 1e-6;
/// Slack allowed on every inequality.
pub const CONSTRAINT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            u_min: -3.0,
            u_max: 3.0,
            v_min: 3.0,
            v_max: 15.0,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min > 0.0 && self.v_max > self.v_min && self.u_min < 0.0 && self.u_max > 0.0) {
            return Err(Error::Validation(format!("invalid limits {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub t0: f64,
    pub tf: f64,
    pub v0: f64,
    pub vf: f64,
    pub sf: f64,
    pub limits: Limits,
}

impl BoundaryConditions {
    pub fn horizon(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        if !(self.tf > self.t0) {
            return Err(Error::Domain(format!(
                "exit time {} must follow entry time {}",
                self.tf, self.t0
            )));
        }
        if !(self.sf > 0.0) {
            return Err(Error::Domain("path length must be positive".into()));
        }
        let inside = |v: f64| {
            v >= self.limits.v_min - CONSTRAINT_SLACK && v <= self.limits.v_max + CONSTRAINT_SLACK
        };
        if !inside(self.v0) || !inside(self.vf) {
            return Err(Error::Domain(format!(
                "boundary speeds {} and {} must lie in [{}, {}]",
                self.v0, self.vf, self.limits.v_min, self.limits.v_max
            )));
        }
        Ok(())
    }

    pub fn with_exit_time(&self, tf: f64) -> Self {
        Self { tf, ..*self }
    }
}

/// `s(t) = s_offset + d + c τ + b τ^2 + a τ^3` with `τ = t - t_start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicSegment {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub s_offset: f64,
}

impl CubicSegment {
    /// Cubic through `(t0, s0)` with speed `v0` and `(t1, s1)` with speed `v1`.
    pub fn between(t0: f64, s0: f64, v0: f64, t1: f64, s1: f64, v1: f64) -> Result<Self> {
        let t = t1 - t0;
        if !(t >= MIN_HORIZON) {
            return Err(Error::Degenerate(format!(
                "segment duration {t:e} s is too short"
            )));
        }
        let ds = s1 - s0;
        Ok(Self {
            a: ((v0 + v1) * t - 2.0 * ds) / (t * t * t),
            b: (3.0 * ds - (2.0 * v0 + v1) * t) / (t * t),
            c: v0,
            d: 0.0,
            t_start: t0,
            t_end: t1,
            s_offset: s0,
        })
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Position in local time as a polynomial.
    pub fn local(&self) -> Cubic {
        Cubic::new(self.s_offset + self.d, self.c, self.b, self.a)
    }

    /// Local polynomial re-expressed in `σ = t - origin`.
    pub fn around(&self, origin: f64) -> Cubic {
        self.local().shift(origin - self.t_start)
    }

    pub fn position(&self, t: f64) -> f64 {
        let tau = t - self.t_start;
        self.s_offset + self.d + tau * (self.c + tau * (self.b + tau * self.a))
    }

    pub fn speed(&self, t: f64) -> f64 {
        let tau = t - self.t_start;
        self.c + tau * (2.0 * self.b + 3.0 * tau * self.a)
    }

    pub fn accel(&self, t: f64) -> f64 {
        6.0 * self.a * (t - self.t_start) + 2.0 * self.b
    }

    /// `1/2 ∫ u^2` over the segment.
    pub fn energy(&self) -> f64 {
        let dt = self.duration();
        let (a, b) = (self.a, self.b);
        2.0 * (3.0 * a * a * dt.powi(3) + 3.0 * a * b * dt * dt + b * b * dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    /// Interior-point joint: position and speed continuous.
    Interior,
    /// Entry or exit of a constrained arc.
    ConstrainedArc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vehicle: usize,
    pub path: usize,
    pub segments: Vec<CubicSegment>,
    /// `joints[i]` joins `segments[i]` and `segments[i + 1]`.
    pub joints: Vec<JointKind>,
}

impl Trajectory {
    pub fn single(segment: CubicSegment) -> Self {
        Self {
            vehicle: 0,
            path: 0,
            segments: vec![segment],
            joints: Vec::new(),
        }
    }

    pub fn tagged(mut self, vehicle: usize, path: usize) -> Self {
        self.vehicle = vehicle;
        self.path = path;
        self
    }

    pub fn t_start(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn t_end(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end
    }

    fn segment_at(&self, t: f64) -> &CubicSegment {
        self.segments
            .iter()
            .find(|s| t < s.t_end)
            .unwrap_or(&self.segments[self.segments.len() - 1])
    }

    pub fn position(&self, t: f64) -> f64 {
        self.segment_at(t).position(t)
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.segment_at(t).speed(t)
    }

    pub fn accel(&self, t: f64) -> f64 {
        self.segment_at(t).accel(t)
    }

    pub fn energy(&self) -> f64 {
        energy(self)
    }

    /// First interior joint as `(time, position)`.
    pub fn junction(&self) -> Option<(f64, f64)> {
        if self.segments.len() < 2 {
            return None;
        }
        let s = &self.segments[1];
        Some((s.t_start, s.position(s.t_start)))
    }

    /// Copy with every position moved by `ds`.
    pub fn shifted(&self, ds: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.segments {
            s.s_offset += ds;
        }
        out
    }

    /// First time the trajectory reaches position `s`, if it does within its domain.
    pub fn crossing_time(&self, s: f64) -> Option<f64> {
        for seg in &self.segments {
            let p = seg.local().add_const(-s);
            if let Some(&tau) = p.roots_in(0.0, seg.duration()).first() {
                return Some(seg.t_start + tau);
            }
        }
        None
    }

    /// Largest position or speed mismatch at a joint.
    pub fn continuity_error(&self) -> f64 {
        self.segments
            .windows(2)
            .map(|w| {
                let t = w[1].t_start;
                let ds = (w[0].position(t) - w[1].position(t)).abs();
                let dv = (w[0].speed(t) - w[1].speed(t)).abs();
                let dt = (w[0].t_end - t).abs();
                ds.max(dv).max(dt)
            })
            .fold(0.0, f64::max)
    }
}

/// Unconstrained energy-optimal cubic between the boundary conditions.
pub fn unconstrained_trajectory(bc: &BoundaryConditions) -> Result<CubicSegment> {
    bc.validate()?;
    CubicSegment::between(bc.t0, 0.0, bc.v0, bc.tf, bc.sf, bc.vf)
}

pub fn energy(traj: &Trajectory) -> f64 {
    traj.segments.iter().map(CubicSegment::energy).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub ok: bool,
    /// Speed with the largest excursion toward or past its bounds.
    pub worst_v: f64,
    /// Acceleration with the largest excursion toward or past its bounds.
    pub worst_u: f64,
}

/// Checks speed and acceleration bounds at segment ends and at the interior
/// speed extrema.
pub fn validate_limits(traj: &Trajectory, limits: &Limits) -> LimitReport {
    let v_excess = |v: f64| (v - limits.v_max).max(limits.v_min - v);
    let u_excess = |u: f64| (u - limits.u_max).max(limits.u_min - u);
    let mut worst_v = (f64::NEG_INFINITY, 0.0);
    let mut worst_u = (f64::NEG_INFINITY, 0.0);
    for seg in &traj.segments {
        let mut times = vec![seg.t_start, seg.t_end];
        if seg.a != 0.0 {
            let tau = -seg.b / (3.0 * seg.a);
            if tau > 0.0 && tau < seg.duration() {
                times.push(seg.t_start + tau);
            }
        }
        for &t in &times {
            let v = seg.speed(t);
            if v_excess(v) > worst_v.0 {
                worst_v = (v_excess(v), v);
            }
        }
        for t in [seg.t_start, seg.t_end] {
            let u = seg.accel(t);
            if u_excess(u) > worst_u.0 {
                worst_u = (u_excess(u), u);
            }
        }
    }
    LimitReport {
        ok: worst_v.0 <= CONSTRAINT_SLACK && worst_u.0 <= CONSTRAINT_SLACK,
        worst_v: worst_v.1,
        worst_u: worst_u.1,
    }
}

/// Samples trajectories at a fixed step as `vehicle,t_s,s_m,v_mps,u_mps2` rows.
pub fn trajectories_csv(trajectories: &[Trajectory], dt: f64) -> String {
    let mut out = String::from("vehicle,t_s,s_m,v_mps,u_mps2\n");
    for tr in trajectories {
        let (t0, t1) = (tr.t_start(), tr.t_end());
        let n = ((t1 - t0) / dt).floor() as usize;
        let mut push = |t: f64| {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                tr.vehicle,
                t,
                tr.position(t),
                tr.speed(t),
                tr.accel(t)
            ));
        };
        for k in 0..=n {
            push(t0 + k as f64 * dt);
        }
        if t0 + n as f64 * dt < t1 - 1e-9 {
            push(t1);
        }
    }
    out
}
