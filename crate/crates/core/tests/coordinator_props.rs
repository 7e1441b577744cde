use proptest::prelude::*;

use flowcoord::coordinator::geometry::{
    build_conflict_table, GeometryConfig, IntersectionGeometry, PathId,
};
use flowcoord::coordinator::{simulate_intersection, CoordinationParams, SimReport, VehicleLeg};
use flowcoord::trajectory::{trajectories_csv, Trajectory};

fn geometry() -> IntersectionGeometry {
    build_conflict_table(&GeometryConfig::default()).unwrap()
}

/// Entry gaps, paths and speeds of a light random stream.
fn stream() -> impl Strategy<Value = Vec<(f64, usize, f64, f64)>> {
    prop::collection::vec((1.5f64..8.0, 0usize..12, 8.5f64..11.5, 8.5f64..11.5), 2..14)
}

fn legs_of(geometry: &IntersectionGeometry, stream: &[(f64, usize, f64, f64)]) -> Vec<VehicleLeg> {
    let mut t = 0.0;
    stream
        .iter()
        .enumerate()
        .map(|(vehicle, &(gap, path, v0, vf))| {
            t += gap;
            let len = geometry.path(PathId(path)).length_m;
            VehicleLeg {
                vehicle,
                path: PathId(path),
                t0: t,
                tf: t + len / (0.5 * (v0 + vf)),
                v0,
                vf,
                slot_s: 2.0,
                entry_edge: None,
                exit_edge: None,
            }
        })
        .collect()
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

/// Smallest separation at any conflict point, from crossings found by bisection.
fn audited_headway(geometry: &IntersectionGeometry, report: &SimReport) -> f64 {
    let mut best = f64::INFINITY;
    for c in geometry.conflicts() {
        for a in report.trajectories.iter().filter(|t| t.path == c.path_a.0) {
            for b in report.trajectories.iter().filter(|t| t.path == c.path_b.0) {
                best = best.min((crossing(a, c.s_a) - crossing(b, c.s_b)).abs());
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn runs_are_deterministic_and_safe(lights in stream()) {
        let g = geometry();
        let params = CoordinationParams::default();
        let legs = legs_of(&g, &lights);
        let Ok(a) = simulate_intersection(&g, &legs, &params) else {
            return Ok(());
        };
        let b = simulate_intersection(&g, &legs, &params).unwrap();
        prop_assert_eq!(a.metrics_json(), b.metrics_json());
        prop_assert_eq!(a.conflict_audit_csv(), b.conflict_audit_csv());
        prop_assert_eq!(trajectories_csv(&a.trajectories, 0.1), trajectories_csv(&b.trajectories, 0.1));
        prop_assert_eq!(a.safety_violations(), 0);
        prop_assert_eq!(a.vehicles, legs.len());
        prop_assert!(audited_headway(&g, &a) >= params.tau_safe_s - 1e-6);
        if let Some(gap) = a.min_gap_m {
            prop_assert!(gap >= params.delta_m - 1e-6);
        }
    }

    #[test]
    fn later_vehicles_do_not_change_earlier_commitments(lights in stream(), cut in 0.2f64..0.9) {
        let g = geometry();
        let params = CoordinationParams::default();
        let legs = legs_of(&g, &lights);
        let t_cut = legs.last().unwrap().t0 * cut;
        let prefix: Vec<_> = legs.iter().filter(|l| l.t0 <= t_cut).cloned().collect();
        let (Ok(full), Ok(part)) = (
            simulate_intersection(&g, &legs, &params),
            simulate_intersection(&g, &prefix, &params),
        ) else {
            return Ok(());
        };
        for tr in part.trajectories.iter().filter(|t| t.t_start() <= t_cut) {
            let other = full.trajectories.iter().find(|t| t.vehicle == tr.vehicle).unwrap();
            prop_assert_eq!(other, tr);
        }
    }

    #[test]
    fn wider_headway_never_saves_energy(lights in stream()) {
        let g = geometry();
        let base = CoordinationParams::default();
        let doubled = CoordinationParams { tau_safe_s: 2.0 * base.tau_safe_s, ..base };
        let legs = legs_of(&g, &lights);
        let a = simulate_intersection(&g, &legs, &base).unwrap();
        let b = simulate_intersection(&g, &legs, &doubled).unwrap();
        prop_assert_eq!(b.safety_violations(), 0);
        prop_assert!(b.total_energy >= a.total_energy - 1e-9, "{} < {}", b.total_energy, a.total_energy);
    }
}
