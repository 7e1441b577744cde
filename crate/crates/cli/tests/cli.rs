use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flowcoord(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowcoord"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = flowcoord(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_grid_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-grid", "--seed", "7", "--out", "a.json"]);
    let out = ok(dir.path(), &["gen-grid", "--seed", "7", "--out", "b.json"]);
    assert!(
        out.contains("12 intersections, 62 depots, 96 edges, 30 demands"),
        "{out}"
    );
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    ok(dir.path(), &["gen-grid", "--seed", "8", "--out", "c.json"]);
    assert_ne!(a, fs::read(dir.path().join("c.json")).unwrap());
}

#[test]
fn pipeline_reports_a_converged_safe_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["pipeline", "--out", "run"]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/summary.json")).unwrap())
            .unwrap();
    let round = &summary["rounds"][0];
    assert!(round["relative_gap"].as_f64().unwrap() <= 1e-4);
    assert_eq!(round["lateral_violations"], 0);
    assert_eq!(round["rear_end_violations"], 0);
    assert!(round["vehicles"].as_u64().unwrap() > 0);
    for f in [
        "flow.json",
        "flow_map.csv",
        "routes.json",
        "schedule.json",
        "itineraries.json",
    ] {
        assert!(dir.path().join("run/round0").join(f).exists(), "{f}");
    }
    let audit = fs::read_to_string(
        dir.path()
            .join("run/round0/intersections/I0_0/conflict_audit.csv"),
    )
    .unwrap();
    assert!(audit.starts_with("conflict_id,vehicle_a,vehicle_b,t_a_s,t_b_s,separation_s\n"));
    let traj = fs::read_to_string(
        dir.path()
            .join("run/round0/intersections/I0_0/trajectories.csv"),
    )
    .unwrap();
    assert!(traj.starts_with("vehicle,t_s,s_m,v_mps,u_mps2\n"));
}

#[test]
fn pipeline_without_feedback_matches_manual_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-grid", "--out", "s.json"]);
    ok(
        d,
        &[
            "solve-flow",
            "--scenario",
            "s.json",
            "--out",
            "f.json",
            "--csv",
            "fm.csv",
        ],
    );
    ok(
        d,
        &[
            "recover-routes",
            "--scenario",
            "s.json",
            "--flow",
            "f.json",
            "--out",
            "r.json",
        ],
    );
    ok(
        d,
        &[
            "schedule",
            "--scenario",
            "s.json",
            "--flow",
            "f.json",
            "--routes",
            "r.json",
            "--out",
            "i.json",
            "--schedule-out",
            "sch.json",
        ],
    );
    for name in ["I0_0", "I1_2"] {
        ok(
            d,
            &[
                "simulate",
                "--scenario",
                "s.json",
                "--flow",
                "f.json",
                "--itineraries",
                "i.json",
                "--intersection",
                name,
                "--out",
                name,
            ],
        );
    }
    ok(
        d,
        &[
            "pipeline",
            "--scenario",
            "s.json",
            "--feedback-rounds",
            "0",
            "--out",
            "run",
        ],
    );
    let same = |a: &str, b: &str| {
        assert_eq!(
            fs::read(d.join(a)).unwrap(),
            fs::read(d.join("run/round0").join(b)).unwrap(),
            "{a} differs from {b}"
        );
    };
    same("s.json", "scenario.json");
    same("f.json", "flow.json");
    same("fm.csv", "flow_map.csv");
    same("r.json", "routes.json");
    same("sch.json", "schedule.json");
    same("i.json", "itineraries.json");
    for name in ["I0_0", "I1_2"] {
        for f in ["metrics.json", "trajectories.csv", "conflict_audit.csv"] {
            same(&format!("{name}/{f}"), &format!("intersections/{name}/{f}"));
        }
    }
    assert!(!d.join("run/round1").exists());
}

#[test]
fn verify_agrees_on_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["verify", "--cases", "100", "--seed", "1"]);
    assert!(out.contains("100/100 oracle agreements"), "{out}");
}

#[test]
fn exit_codes_separate_usage_from_infeasibility() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(flowcoord(d, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        flowcoord(d, &["solve-flow", "--scenario", "missing.json"])
            .status
            .code(),
        Some(2)
    );

    fs::write(d.join("bad.toml"), "sede = 1\n").unwrap();
    assert_eq!(
        flowcoord(d, &["--config", "bad.toml", "config"])
            .status
            .code(),
        Some(2)
    );

    // b cannot reach a.
    fs::write(
        d.join("oneway.json"),
        r#"{"nodes": [{"id": "a", "kind": "depot"}, {"id": "b", "kind": "depot"}],
            "edges": [{"tail": "a", "head": "b", "t0_s": 10, "capacity_vps": 1, "length_m": 100}],
            "demands": [{"origin": "b", "destination": "a", "rate_vps": 0.1}]}"#,
    )
    .unwrap();
    let out = flowcoord(d, &["solve-flow", "--scenario", "oneway.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("solve-flow") && err.contains("demand 0"),
        "{err}"
    );

    fs::write(
        d.join("unknown.json"),
        r#"{"nodes": [], "edges": [], "demands": [], "extra": 1}"#,
    )
    .unwrap();
    assert_eq!(
        flowcoord(d, &["solve-flow", "--scenario", "unknown.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let defaults = ok(d, &["config"]);
    assert!(defaults.contains("tau_safe_s = 2.0"), "{defaults}");
    fs::write(
        d.join("c.toml"),
        "seed = 11\n[grid]\nrows = 2\ncols = 2\ndemands = 5\n",
    )
    .unwrap();
    let out = ok(d, &["--config", "c.toml", "gen-grid", "--out", "s.json"]);
    assert!(
        out.contains("4 intersections") && out.contains("5 demands (seed 11)"),
        "{out}"
    );
}
