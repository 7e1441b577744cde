//! Direct transcription of the minimum-energy problem, used to certify the
//! closed-form trajectories.
//!
//! The control is held constant on each of `N` steps of length `h = T / N`.
//! Speed is then piecewise linear and the trapezoidal rule integrates
//! position exactly, so every grid quantity is linear in the controls and the
//! problem `min 1/2 h Σ u_i^2` is a strictly convex QP. It is solved with a
//! small active-set method.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::trajectory::{
    interior_cost, optimal_interior_speed, unconstrained_trajectory, BoundaryConditions,
    InteriorPoint, Limits, Trajectory,
};

const FEAS_TOL: f64 = 1e-9;
const MAX_ACTIVE_SET_ITERS: usize = 2000;

#[derive(Debug, Clone, Default)]
pub struct OracleConstraints {
    /// Pass through `s_c` at speed `v_c` at the grid point nearest `t_c`.
    pub interior: Option<InteriorPoint>,
    /// Impose speed and acceleration bounds at grid points.
    pub limits: bool,
    /// Keep `delta` behind this leader (same path coordinate) at every grid point.
    pub leader: Option<(Trajectory, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSolution {
    pub n: usize,
    pub h: f64,
    pub energy: f64,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub kkt_residual: f64,
    pub active_inequalities: usize,
}

impl OracleSolution {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,s_m,v_mps,u_mps2\n");
        for k in 0..=self.n {
            let u = if k < self.n {
                self.u[k]
            } else {
                self.u[self.n - 1]
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.t[k], self.s[k], self.v[k], u
            ));
        }
        out
    }
}

/// Rows mapping controls to grid speed and position offsets:
/// `v_k = v_0 + h Σ_{i<k} u_i` and `s_k = v_0 k h + h^2 Σ_{i<k} (k - i - 1/2) u_i`.
struct Transcription {
    n: usize,
    h: f64,
    v0: f64,
}

impl Transcription {
    fn speed_row(&self, k: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n];
        for r in row.iter_mut().take(k) {
            *r = self.h;
        }
        row
    }

    fn position_row(&self, k: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n];
        for (i, r) in row.iter_mut().enumerate().take(k) {
            *r = self.h * self.h * (k as f64 - i as f64 - 0.5);
        }
        row
    }

    fn speed_offset(&self) -> f64 {
        self.v0
    }

    fn position_offset(&self, k: usize) -> f64 {
        self.v0 * k as f64 * self.h
    }
}

struct Qp {
    eq: Vec<(Vec<f64>, f64)>,
    ineq: Vec<(Vec<f64>, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `1/2 h |u|^2` subject to `A u = b` for the working rows.
/// Returns the controls and the multipliers of the working rows.
fn solve_working(h: f64, rows: &[&(Vec<f64>, f64)], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = rows.len();
    if m == 0 {
        return Ok((vec![0.0; n], Vec::new()));
    }
    let a = DMatrix::from_fn(m, n, |i, j| rows[i].0[j]);
    let b = DVector::from_iterator(m, rows.iter().map(|r| r.1));
    let gram = &a * a.transpose();
    let y = gram.clone().lu().solve(&b).ok_or_else(|| {
        Error::OracleInfeasible("working constraints are linearly dependent".into())
    })?;
    let u = a.transpose() * &y;
    let lambda: Vec<f64> = y.iter().map(|v| -h * v).collect();
    Ok((u.iter().copied().collect(), lambda))
}

fn solve_qp(qp: &Qp, n: usize, h: f64) -> Result<(Vec<f64>, f64, usize)> {
    let mut working: Vec<usize> = Vec::new();
    let neq = qp.eq.len();
    for _ in 0..MAX_ACTIVE_SET_ITERS {
        let rows: Vec<&(Vec<f64>, f64)> = qp
            .eq
            .iter()
            .chain(working.iter().map(|&i| &qp.ineq[i]))
            .collect();
        let (u, lambda) = solve_working(h, &rows, n)?;
        // Drop the working inequality with the most negative multiplier.
        let worst_mult = working
            .iter()
            .enumerate()
            .map(|(k, &i)| (lambda[neq + k], i))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((mu, idx)) = worst_mult {
            if mu < -1e-10 {
                working.retain(|&i| i != idx);
                continue;
            }
        }
        // Otherwise add the most violated inequality.
        let worst_violation = qp
            .ineq
            .iter()
            .enumerate()
            .filter(|(i, _)| !working.contains(i))
            .map(|(i, (row, g))| (dot(row, &u) - g, i))
            .max_by(|a, b| a.0.total_cmp(&b.0));
        match worst_violation {
            Some((viol, idx)) if viol > FEAS_TOL => working.push(idx),
            _ => {
                // KKT residual: stationarity, primal feasibility, dual sign.
                let mut grad: Vec<f64> = u.iter().map(|x| h * x).collect();
                for (k, row) in rows.iter().enumerate() {
                    for (g, a) in grad.iter_mut().zip(&row.0) {
                        *g += lambda[k] * a;
                    }
                }
                let stat = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
                let eq_res = qp
                    .eq
                    .iter()
                    .fold(0.0_f64, |m, (r, b)| m.max((dot(r, &u) - b).abs()));
                let ineq_res = qp
                    .ineq
                    .iter()
                    .fold(0.0_f64, |m, (r, g)| m.max(dot(r, &u) - g));
                let dual = lambda[neq..].iter().fold(0.0_f64, |m, l| m.max(-l));
                let kkt = stat.max(eq_res).max(ineq_res).max(dual);
                return Ok((u, kkt, working.len()));
            }
        }
    }
    Err(Error::OracleInfeasible(
        "active-set iteration limit reached".into(),
    ))
}

/// Solves the transcribed problem on `n` steps.
pub fn discretized_optimum(
    bc: &BoundaryConditions,
    constraints: &OracleConstraints,
    n: usize,
) -> Result<OracleSolution> {
    bc.validate()?;
    if n < 4 {
        return Err(Error::Domain(
            "the transcription needs at least 4 steps".into(),
        ));
    }
    let h = bc.horizon() / n as f64;
    let tr = Transcription { n, h, v0: bc.v0 };
    let mut eq = vec![
        (tr.speed_row(n), bc.vf - tr.speed_offset()),
        (tr.position_row(n), bc.sf - tr.position_offset(n)),
    ];
    if let Some(ip) = constraints.interior {
        let j = ((ip.t_c - bc.t0) / h).round() as usize;
        if j == 0 || j >= n {
            return Err(Error::Domain(format!(
                "interior time {} snaps to the grid boundary",
                ip.t_c
            )));
        }
        eq.push((tr.position_row(j), ip.s_c - tr.position_offset(j)));
        eq.push((tr.speed_row(j), ip.v_c - tr.speed_offset()));
    }
    let mut ineq = Vec::new();
    if constraints.limits {
        let lim: &Limits = &bc.limits;
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            ineq.push((row.clone(), lim.u_max));
            row[i] = -1.0;
            ineq.push((row, -lim.u_min));
        }
        for k in 1..n {
            let row = tr.speed_row(k);
            ineq.push((row.clone(), lim.v_max - tr.speed_offset()));
            ineq.push((
                row.iter().map(|x| -x).collect(),
                tr.speed_offset() - lim.v_min,
            ));
        }
    }
    if let Some((leader, delta)) = &constraints.leader {
        for k in 1..n {
            let t = bc.t0 + k as f64 * h;
            if t < leader.t_start() || t > leader.t_end() {
                continue;
            }
            ineq.push((
                tr.position_row(k),
                leader.position(t) - delta - tr.position_offset(k),
            ));
        }
    }
    let (u, kkt, active) = solve_qp(&Qp { eq, ineq }, n, h)?;
    let mut t = Vec::with_capacity(n + 1);
    let mut s = Vec::with_capacity(n + 1);
    let mut v = Vec::with_capacity(n + 1);
    let (mut sk, mut vk) = (0.0, bc.v0);
    for k in 0..=n {
        t.push(bc.t0 + k as f64 * h);
        s.push(sk);
        v.push(vk);
        if k < n {
            let vn = vk + h * u[k];
            sk += 0.5 * h * (vk + vn);
            vk = vn;
        }
    }
    let energy = 0.5 * h * u.iter().map(|x| x * x).sum::<f64>();
    Ok(OracleSolution {
        n,
        h,
        energy,
        t,
        s,
        v,
        u,
        kkt_residual: kkt,
        active_inequalities: active,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub case: usize,
    pub closed_form: f64,
    pub oracle: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub unconstrained: Vec<CaseResult>,
    pub interior: Vec<CaseResult>,
    /// `|E_200 - E*| / |E_400 - E*|` on the first unconstrained case with nonzero energy.
    pub richardson_ratio: f64,
}

impl CertificationReport {
    pub fn agreements(&self) -> usize {
        self.unconstrained
            .iter()
            .zip(&self.interior)
            .filter(|(a, b)| a.passed && b.passed)
            .count()
    }

    pub fn cases(&self) -> usize {
        self.unconstrained.len()
    }

    pub fn richardson_ok(&self) -> bool {
        (3.0..=5.0).contains(&self.richardson_ratio)
    }
}

/// Relative difference, measured on a scale that stays meaningful for
/// near-zero energies.
fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Random boundary conditions of the kind produced by the route stage.
pub fn random_bc(rng: &mut ChaCha8Rng) -> BoundaryConditions {
    let limits = Limits::default();
    let t = rng.gen_range(30.0..50.0);
    let v0 = rng.gen_range(7.0..13.0);
    let vf = rng.gen_range(7.0..13.0);
    // Average speed near the mean boundary speed.
    let sf = rng.gen_range(0.85..1.15) * 0.5 * (v0 + vf) * t;
    let t0 = rng.gen_range(0.0..100.0);
    BoundaryConditions {
        t0,
        tf: t0 + t,
        v0,
        vf,
        sf,
        limits,
    }
}

/// Runs the oracle on `cases` random unconstrained and interior-point problems.
pub fn certify(cases: usize, seed: u64) -> Result<CertificationReport> {
    const N: usize = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unconstrained = Vec::with_capacity(cases);
    let mut interior = Vec::with_capacity(cases);
    let mut richardson = f64::NAN;
    for case in 0..cases {
        let bc = random_bc(&mut rng);
        let cf = unconstrained_trajectory(&bc)?.energy();
        let or = discretized_optimum(&bc, &OracleConstraints::default(), N)?;
        let rel = relative(or.energy, cf);
        unconstrained.push(CaseResult {
            case,
            closed_form: cf,
            oracle: or.energy,
            relative_error: rel,
            tolerance: 0.005,
            passed: rel <= 0.005 && or.kkt_residual <= 1e-8,
        });
        if richardson.is_nan() && cf > 1e-6 {
            let coarse = discretized_optimum(&bc, &OracleConstraints::default(), N / 2)?;
            richardson = (coarse.energy - cf).abs() / (or.energy - cf).abs();
        }

        // Interior point on a grid node, off the unconstrained cubic.
        let h = bc.horizon() / N as f64;
        let j = rng.gen_range(N / 4..3 * N / 4);
        let t_c = bc.t0 + j as f64 * h;
        let seg = unconstrained_trajectory(&bc)?;
        let s_c = seg.position(t_c) + rng.gen_range(-15.0..15.0);
        let v_c = optimal_interior_speed(&bc, s_c, t_c)?.v;
        let ip = InteriorPoint { s_c, t_c, v_c };
        let cf = interior_cost(&bc, s_c, t_c, v_c)?;
        let or = discretized_optimum(
            &bc,
            &OracleConstraints {
                interior: Some(ip),
                ..Default::default()
            },
            N,
        )?;
        let rel = relative(or.energy, cf);
        interior.push(CaseResult {
            case,
            closed_form: cf,
            oracle: or.energy,
            relative_error: rel,
            tolerance: 0.01,
            passed: rel <= 0.01 && or.kkt_residual <= 1e-8,
        });
    }
    Ok(CertificationReport {
        unconstrained,
        interior,
        richardson_ratio: richardson,
    })
}
