//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowcoord::coordinator::geometry::{build_conflict_table, GeometryConfig, PathId};
use flowcoord::coordinator::{simulate_intersection, CoordinationParams, SimReport};
use flowcoord::flow::{solve_flow, SolveOptions};
use flowcoord::grid::{grid_network, random_demands, GridConfig};
use flowcoord::network::{Demand, Edge, EdgeId, NodeId, NodeKind, RoadNetwork};
use flowcoord::oracle::{certify, random_bc};
use flowcoord::pipeline::{busy_intersection_legs, run_pipeline, PipelineConfig};
use flowcoord::routes::{
    assign_boundary_conditions, recover_routes, synchronize_departures, Route,
};
use flowcoord::trajectory::{
    check_rear_end, flow_modify, interior_cost, optimal_interior_speed, resolve_lateral,
    resolve_rear_end, unimodality_conditions,
};
use flowcoord::trajectory::{
    trajectories_csv, unconstrained_trajectory, BoundaryConditions, CubicSegment, Limits,
    Trajectory,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

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

// 1
fn convexity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let t0 = rng.gen_range(1.0..100.0);
        let gamma = rng.gen_range(0.1..5.0);
        let x = rng.gen_range(1e-3..10.0);
        let edge = Edge {
            tail: NodeId(0),
            head: NodeId(1),
            free_flow_time: t0,
            capacity: gamma,
            length: 1.0,
        };
        let h = (1e-3f64).min(0.5 * x);
        let d2 = (edge.cost(x + h) - 2.0 * edge.cost(x) + edge.cost(x - h)) / (h * h);
        worst = worst.min(d2);
        ensure(d2 >= -1e-9, || {
            format!("second difference {d2} at t0={t0} gamma={gamma} x={x}")
        })?;
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!(
        "1000 triples, smallest second difference {worst:.3e}"
    ))
}

// 2
fn flow_optimum() -> Outcome {
    let start = Instant::now();
    let grid = GridConfig::default();
    let network = grid_network(&grid).map_err(|e| e.to_string())?;
    let intersections = network.intersections().count();
    let depots = network.depots().count();
    ensure(
        intersections == 12 && depots == 62 && network.edge_count() == 96,
        || {
            format!(
                "grid has {intersections}/{depots}/{} nodes and edges",
                network.edge_count()
            )
        },
    )?;
    let demands = random_demands(&network, &grid, 7).map_err(|e| e.to_string())?;
    ensure(demands.len() == 30, || format!("{} demands", demands.len()))?;
    let options = SolveOptions {
        trace: true,
        ..SolveOptions::default()
    };
    let sol = solve_flow(&network, &demands, &options).map_err(|e| e.to_string())?;
    ensure(sol.relative_gap <= 1e-4, || {
        format!("relative gap {}", sol.relative_gap)
    })?;
    for (d, flows) in demands.iter().zip(&sol.per_demand) {
        let r = residual(&network, d, flows);
        ensure(r <= 1e-8 * d.rate, || {
            format!("demand {} residual {r}", d.id)
        })?;
    }
    for w in sol.trace.windows(2) {
        ensure(w[1].objective <= w[0].objective * (1.0 + 1e-12), || {
            format!("objective rises at iteration {}", w[1].iteration)
        })?;
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "gap {:.2e} after {} iterations in {:.2} s",
        sol.relative_gap,
        sol.iterations,
        start.elapsed().as_secs_f64()
    ))
}

/// Largest node imbalance of one demand, with the source emitting and the
/// sink absorbing the demand rate.
fn residual(network: &RoadNetwork, d: &Demand, flows: &[f64]) -> f64 {
    let mut balance = vec![0.0; network.node_count()];
    for (e, edge) in network.edges().iter().enumerate() {
        balance[edge.tail.0] -= flows[e];
        balance[edge.head.0] += flows[e];
    }
    balance[d.origin.0] += d.rate;
    balance[d.destination.0] -= d.rate;
    balance.iter().fold(0.0f64, |m, b| m.max(b.abs()))
}

// 3
fn route_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total_routes = 0;
    for instance in 0..50 {
        let grid = GridConfig {
            rows: rng.gen_range(1..=3),
            cols: rng.gen_range(1..=4),
            demands: rng.gen_range(3..=20),
            ..GridConfig::default()
        };
        let network = grid_network(&grid).map_err(|e| e.to_string())?;
        let demands = random_demands(&network, &grid, instance).map_err(|e| e.to_string())?;
        let sol =
            solve_flow(&network, &demands, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let routes = recover_routes(&network, &sol, &demands)
            .map_err(|e| format!("instance {instance}: {e}"))?;
        total_routes += routes.len();
        let mut rebuilt = vec![vec![0.0; network.edge_count()]; demands.len()];
        let mut totals = vec![0.0; demands.len()];
        for r in &routes {
            for e in &r.edges {
                rebuilt[r.demand][e.0] += r.flow;
            }
            totals[r.demand] += r.flow;
        }
        for (m, d) in demands.iter().enumerate() {
            ensure((totals[m] - d.rate).abs() <= 1e-9, || {
                format!(
                    "instance {instance} demand {m}: route flows sum to {} not {}",
                    totals[m], d.rate
                )
            })?;
            for e in 0..network.edge_count() {
                let diff = (rebuilt[m][e] - sol.per_demand[m][e]).abs();
                ensure(diff <= 1e-9, || {
                    format!("instance {instance} demand {m} edge {e}: off by {diff}")
                })?;
            }
        }
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("50 instances, {total_routes} routes"))
}

// 4
fn exit_rules() -> Outcome {
    let mut checked = 0;
    for seed in 1..=5 {
        let grid = GridConfig::default();
        let network = grid_network(&grid).map_err(|e| e.to_string())?;
        let demands = random_demands(&network, &grid, seed).map_err(|e| e.to_string())?;
        let sol =
            solve_flow(&network, &demands, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let routes = recover_routes(&network, &sol, &demands).map_err(|e| e.to_string())?;
        let schedule = synchronize_departures(&routes, 60.0).map_err(|e| e.to_string())?;
        let itineraries =
            assign_boundary_conditions(&network, &routes, &schedule, &sol, &Limits::default())
                .map_err(|e| e.to_string())?;
        let mut exits: BTreeMap<EdgeId, Vec<f64>> = BTreeMap::new();
        for it in &itineraries {
            for leg in &it.legs {
                exits.entry(leg.exit_edge).or_default().push(leg.t_exit);
            }
        }
        for (edge, mut times) in exits {
            times.sort_by(f64::total_cmp);
            let min = 1.0 / sol.aggregate[edge.0];
            for w in times.windows(2) {
                checked += 1;
                ensure(w[1] - w[0] >= min - 1e-9, || {
                    format!(
                        "seed {seed} edge {}: spacing {} below {min}",
                        edge.0,
                        w[1] - w[0]
                    )
                })?;
            }
        }
    }

    // Two routes sharing the first edge at 0.1 and 0.25 veh/s.
    let routes = [
        Route {
            demand: 0,
            index: 0,
            edges: vec![EdgeId(0), EdgeId(1)],
            flow: 0.1,
        },
        Route {
            demand: 1,
            index: 0,
            edges: vec![EdgeId(0), EdgeId(2)],
            flow: 0.25,
        },
    ];
    let schedule = synchronize_departures(&routes, 40.0).map_err(|e| e.to_string())?;
    let events = schedule.events();
    ensure(events.len() == 14, || {
        format!("{} merged departures", events.len())
    })?;
    let mut times: Vec<f64> = events.iter().map(|e| e.time).collect();
    times.sort_by(f64::total_cmp);
    for (k, t) in times.iter().enumerate() {
        ensure(*t == k as f64 * (1.0 / 0.35), || {
            format!("departure {k} at {t}")
        })?;
    }
    Ok(format!("{checked} exit gaps, merged spacing 1/0.35 s"))
}

// 5
fn oracle_agreement() -> Outcome {
    let start = Instant::now();
    let report = certify(100, 5).map_err(|e| e.to_string())?;
    let bad_u = report
        .unconstrained
        .iter()
        .filter(|c| c.relative_error > 0.005)
        .count();
    let bad_i = report
        .interior
        .iter()
        .take(50)
        .filter(|c| c.relative_error > 0.01)
        .count();
    let worst_u = report
        .unconstrained
        .iter()
        .map(|c| c.relative_error)
        .fold(0.0, f64::max);
    let worst_i = report
        .interior
        .iter()
        .take(50)
        .map(|c| c.relative_error)
        .fold(0.0, f64::max);
    ensure(
        report.unconstrained.len() == 100 && report.interior.len() >= 50,
        || "too few cases".into(),
    )?;
    ensure(bad_u == 0, || {
        format!("{bad_u} unconstrained cases above 0.5%, worst {worst_u:.3e}")
    })?;
    ensure(bad_i == 0, || {
        format!("{bad_i} interior cases above 1%, worst {worst_i:.3e}")
    })?;
    ensure(report.richardson_ok(), || {
        format!("Richardson ratio {}", report.richardson_ratio)
    })?;
    within(start.elapsed(), 300.0)?;
    Ok(format!(
        "worst errors {worst_u:.2e} / {worst_i:.2e}, Richardson {:.3}",
        report.richardson_ratio
    ))
}

/// Golden-section minimizer, kept local so the check does not reuse the
/// crate's own search.
fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while b - a > 1e-10 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

// 6
fn interior_speed() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_grad = 0.0f64;
    for case in 0..200 {
        let b = random_bc(&mut rng);
        let s_c = rng.gen_range(0.2..0.8) * b.sf;
        let t_c = b.t0 + rng.gen_range(0.2..0.8) * b.horizon();
        let v = optimal_interior_speed(&b, s_c, t_c)
            .map_err(|e| e.to_string())?
            .unclamped;
        let j = |v_c: f64| interior_cost(&b, s_c, t_c, v_c).expect("valid interior point");
        let jv = j(v);
        let h = 1e-4;
        let grad = (j(v + h) - j(v - h)) / (2.0 * h);
        worst_grad = worst_grad.max(grad.abs() / (1.0 + jv.abs()));
        ensure(grad.abs() <= 1e-6 * (1.0 + jv.abs()), || {
            format!("case {case}: gradient {grad}")
        })?;
        let gs = golden(j, v - 20.0, v + 20.0);
        ensure((gs - v).abs() <= 1e-6, || {
            format!("case {case}: golden section {gs}, closed form {v}")
        })?;
        let h2 = 1e-2;
        let curv = (j(v + h2) - 2.0 * jv + j(v - h2)) / (h2 * h2);
        let expected = 4.0 / (t_c - b.t0) + 4.0 / (b.tf - t_c);
        ensure((curv - expected).abs() <= 0.01 * expected, || {
            format!("case {case}: curvature {curv}, expected {expected}")
        })?;
    }
    Ok(format!("200 cases, worst scaled gradient {worst_grad:.2e}"))
}

fn crossing(tr: &Trajectory, s: f64) -> f64 {
    let (mut lo, mut hi) = (tr.t_start(), tr.t_end());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tr.position(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// 7
fn boundary_optimality() -> Outcome {
    const TAU: f64 = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0;
    let mut attempts = 0;
    while done < 100 {
        attempts += 1;
        ensure(attempts < 10_000, || format!("only {done} usable cases"))?;
        let b = random_bc(&mut rng);
        let s_c = rng.gen_range(0.3..0.7) * b.sf;
        if !unimodality_conditions(&b, s_c).holds {
            continue;
        }
        let free = Trajectory::single(unconstrained_trajectory(&b).map_err(|e| e.to_string())?);
        let t_p = crossing(&free, s_c) + rng.gen_range(-0.9..0.9) * TAU;
        if t_p - TAU <= b.t0 + 1.0 || t_p + TAU >= b.tf - 1.0 {
            continue;
        }
        let j = |t: f64| {
            let v = optimal_interior_speed(&b, s_c, t)
                .expect("inside")
                .unclamped;
            interior_cost(&b, s_c, t, v).expect("inside")
        };
        let jb = j(t_p - TAU).min(j(t_p + TAU));
        // The committed resolution must sit on the same boundary when the
        // speed limits are inactive.
        if let Ok(tr) = resolve_lateral(&b, s_c, &[t_p], TAU) {
            let v =
                optimal_interior_speed(&b, s_c, crossing(&tr, s_c)).map_err(|e| e.to_string())?;
            if !v.clamped {
                ensure((tr.energy() - jb).abs() <= 1e-6 * jb.max(1e-9), || {
                    format!("resolution energy {} vs boundary {jb}", tr.energy())
                })?;
            }
        }
        let mut t = b.t0 + 1e-3;
        let mut best = f64::INFINITY;
        while t < b.tf - 1e-3 {
            if (t - t_p).abs() >= TAU {
                best = best.min(j(t));
            }
            t += 1e-3;
        }
        ensure(best >= jb - 1e-6 * jb, || {
            format!("grid point {best} below boundary {jb}")
        })?;
        let n = 2000;
        let scan: Vec<f64> = (1..n)
            .map(|k| j(b.t0 + b.horizon() * k as f64 / n as f64))
            .collect();
        let argmin = (0..scan.len())
            .min_by(|&a, &c| scan[a].total_cmp(&scan[c]))
            .unwrap();
        let tol = |x: f64| 1e-9 * x.abs().max(1.0);
        let descending = scan[..=argmin].windows(2).all(|w| w[1] <= w[0] + tol(w[0]));
        let ascending = scan[argmin..].windows(2).all(|w| w[1] >= w[0] - tol(w[0]));
        ensure(descending && ascending, || {
            format!("cost not unimodal for bc {b:?}, s_c {s_c}")
        })?;
        done += 1;
    }
    Ok(format!("100 cases from {attempts} draws"))
}

/// Follower entering at `t0` whose exit time makes its junction speed
/// equal to the leader's speed there.
fn matched_follower(leader: &Trajectory, t0: f64, v: f64, sf: f64) -> Option<BoundaryConditions> {
    let (t_j, s_j) = leader.junction()?;
    let v_p = leader.speed(t_j);
    let miss = |tf: f64| {
        optimal_interior_speed(&bc(t0, tf, v, v, sf), s_j - 10.0, t_j).map(|s| s.unclamped - v_p)
    };
    let (mut lo, mut hi) = (t_j + 1.0, t_j + 60.0);
    let (ml, mh) = (miss(lo).ok()?, miss(hi).ok()?);
    if ml * mh >= 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if miss(mid).ok()? * ml > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(bc(t0, lo, v, v, sf))
}

// 8
fn rear_end_construction() -> Outcome {
    const DELTA: f64 = 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut junctions, mut certificates, mut attempts) = (0, 0, 0);
    let mut worst = f64::INFINITY;
    while junctions < 50 || certificates < 50 {
        attempts += 1;
        ensure(attempts < 5000, || {
            format!("only {junctions} junction and {certificates} certificate cases")
        })?;
        let v = rng.gen_range(9.0..11.0);
        let sf = 400.0;
        let lb = bc(0.0, sf / v, v, v, sf);
        let natural = crossing(
            &Trajectory::single(unconstrained_trajectory(&lb).map_err(|e| e.to_string())?),
            200.0,
        );
        let Ok(leader) = resolve_lateral(&lb, 200.0, &[natural - rng.gen_range(0.2..1.5)], 2.0)
        else {
            continue;
        };
        if leader.junction().is_none() {
            continue;
        }
        let t0 = rng.gen_range(1.5..3.0);
        let Some(f) = matched_follower(&leader, t0, v, sf) else {
            continue;
        };
        let window = |b: &BoundaryConditions| (b.t0, b.tf.min(leader.t_end()));
        if junctions < 50 {
            let tr = resolve_rear_end(&f, &leader, DELTA)
                .map_err(|e| format!("matched follower: {e}"))?;
            let gap = check_rear_end(&tr, &leader, window(&f));
            worst = worst.min(gap);
            ensure(gap >= DELTA - 1e-6, || format!("junction gap {gap}"))?;
            junctions += 1;
        }
        if certificates < 50 {
            let late = f.with_exit_time(f.tf + rng.gen_range(0.5..2.0));
            if resolve_rear_end(&late, &leader, DELTA).is_ok() {
                continue;
            }
            let m = flow_modify(&late, &leader, DELTA)
                .map_err(|e| format!("flow modification: {e}"))?;
            if m.tau_new <= 1e-3 {
                continue;
            }
            let gap = check_rear_end(&m.trajectory, &leader, (late.t0, m.t_c));
            ensure(gap >= DELTA - 1e-6, || format!("modified gap {gap}"))?;
            let (_, s_j) = leader.junction().unwrap();
            let t = m.t_c - 1e-3;
            let shifted = late.with_exit_time(late.tf + m.tau_new - 1e-3);
            let vc = optimal_interior_speed(&shifted, s_j - DELTA, t).map_err(|e| e.to_string())?;
            let first = CubicSegment::between(late.t0, 0.0, v, t, s_j - DELTA, vc.v)
                .map_err(|e| e.to_string())?;
            let early = check_rear_end(&Trajectory::single(first), &leader, (late.t0, t));
            ensure(early < DELTA, || {
                format!("junction 1 ms earlier still clears: gap {early}")
            })?;
            certificates += 1;
        }
    }
    Ok(format!(
        "50 junctions (worst gap {worst:.6} m), 50 minimality certificates"
    ))
}

/// Independent audit of a finished run: crossing times by bisection and
/// sampled gaps between vehicles sharing a path.
fn audit(
    report: &SimReport,
    geometry_cfg: &GeometryConfig,
    params: &CoordinationParams,
) -> Result<(f64, f64), String> {
    let geometry = build_conflict_table(geometry_cfg).map_err(|e| e.to_string())?;
    let mut headway = f64::INFINITY;
    for c in geometry.conflicts() {
        let on = |p: PathId, s: f64| -> Vec<f64> {
            report
                .trajectories
                .iter()
                .filter(|t| t.path == p.0)
                .map(|t| crossing(t, s))
                .collect()
        };
        for ta in on(c.path_a, c.s_a) {
            for tb in on(c.path_b, c.s_b) {
                headway = headway.min((ta - tb).abs());
            }
        }
    }
    ensure(headway >= params.tau_safe_s - 1e-6, || {
        format!("conflict headway {headway}")
    })?;
    let mut gap = f64::INFINITY;
    for a in &report.trajectories {
        for b in &report.trajectories {
            if a.path != b.path || a.t_start() >= b.t_start() {
                continue;
            }
            let (lo, hi) = (b.t_start(), a.t_end().min(b.t_end()));
            let mut t = lo;
            while t <= hi {
                gap = gap.min(a.position(t) - b.position(t));
                t += 0.05;
            }
        }
    }
    ensure(gap >= params.delta_m - 1e-6, || {
        format!("sampled rear gap {gap}")
    })?;
    Ok((headway, gap))
}

// 9
fn full_intersection() -> Outcome {
    let start = Instant::now();
    let config = PipelineConfig::default();
    let legs = busy_intersection_legs(8, 140, &config).map_err(|e| e.to_string())?;
    ensure(legs.len() == 140, || format!("{} legs", legs.len()))?;
    let geometry = build_conflict_table(&config.geometry).map_err(|e| e.to_string())?;
    let run =
        || simulate_intersection(&geometry, &legs, &config.coordination).map_err(|e| e.to_string());
    let (first, second) = (run()?, run()?);
    within(start.elapsed(), 30.0)?;
    ensure(first.vehicles == 140, || {
        format!("{} vehicles committed", first.vehicles)
    })?;
    ensure(
        first.lateral_violations == 0 && first.rear_end_violations == 0,
        || {
            format!(
                "{} lateral and {} rear-end violations",
                first.lateral_violations, first.rear_end_violations
            )
        },
    )?;
    ensure(
        first
            .min_gap_m
            .is_none_or(|g| g >= config.coordination.delta_m - 1e-6),
        || format!("min gap {:?}", first.min_gap_m),
    )?;
    ensure(
        first
            .min_headway_s
            .is_none_or(|h| h >= config.coordination.tau_safe_s - 1e-6),
        || format!("min headway {:?}", first.min_headway_s),
    )?;
    let bytes = |r: &SimReport| {
        (
            r.metrics_json(),
            r.conflict_audit_csv(),
            trajectories_csv(&r.trajectories, 0.1),
        )
    };
    ensure(bytes(&first) == bytes(&second), || {
        "reports differ between runs".into()
    })?;
    let (headway, gap) = audit(&first, &config.geometry, &config.coordination)?;
    Ok(format!(
        "140 vehicles, {} deferrals, min headway {headway:.4} s, min gap {gap:.4} m, {:.2} s",
        first.deferrals,
        start.elapsed().as_secs_f64()
    ))
}

// 10
fn feedback_loop() -> Outcome {
    let grid = GridConfig {
        rows: 2,
        cols: 2,
        ..GridConfig::default()
    };
    let network = grid_network(&grid).map_err(|e| e.to_string())?;
    let node = |name: &str| {
        network
            .node_id(name)
            .ok_or_else(|| format!("no node {name}"))
    };
    let demands = vec![
        Demand {
            id: 0,
            origin: node("B1_0W")?,
            destination: node("D0_1S")?,
            rate: 0.41,
        },
        Demand {
            id: 1,
            origin: node("B0_0W")?,
            destination: node("D0_1E")?,
            rate: 0.41,
        },
    ];
    for d in &demands {
        ensure(network.node(d.destination).kind == NodeKind::Depot, || {
            "destination is not a depot".into()
        })?;
    }
    let config = PipelineConfig {
        horizon_s: 60.0,
        feedback_rounds: 1,
        ..PipelineConfig::default()
    };
    let rounds = run_pipeline(&network, &demands, &config).map_err(|e| e.to_string())?;
    ensure(rounds.len() == 2, || format!("{} rounds ran", rounds.len()))?;
    let (before, after) = (&rounds[0], &rounds[1]);
    ensure(before.hard_infeasibilities() > 0, || {
        "scenario is not over capacity".into()
    })?;
    ensure(
        after.deferred_vehicles() < before.deferred_vehicles(),
        || {
            format!(
                "deferrals {} -> {}",
                before.deferred_vehicles(),
                after.deferred_vehicles()
            )
        },
    )?;
    ensure(after.hard_infeasibilities() == 0, || {
        format!(
            "{} hard infeasibilities after feedback",
            after.hard_infeasibilities()
        )
    })?;
    Ok(format!(
        "deferred {} -> {}, hard infeasibilities {} -> 0",
        before.deferred_vehicles(),
        after.deferred_vehicles(),
        before.hard_infeasibilities()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("convexity of the edge cost", convexity),
        ("flow optimum on the generated grid", flow_optimum),
        ("route recovery superposition", route_recovery),
        ("departure and exit spacing", exit_rules),
        ("closed form against the oracle", oracle_agreement),
        ("optimal interior speed", interior_speed),
        ("lateral optimum on the boundary", boundary_optimality),
        (
            "rear-end junction and flow modification",
            rear_end_construction,
        ),
        ("140-vehicle intersection run", full_intersection),
        ("flow feedback loop", feedback_loop),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
