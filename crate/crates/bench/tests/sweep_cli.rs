use std::path::Path;
use std::process::Command;

use modelopt::ProblemKind;
use modelopt_bench::plot::emit_plots;
use modelopt_bench::sweep::{cells, execute, execute_cells, manifest, read_results, rows_from_csv, rows_to_csv, strip_timing, sweep, Manifest};
use modelopt_bench::{ConvexConfig, Method, SweepConfig, SweepRow, CSV_HEADER};
use proptest::prelude::*;

fn small_config(dir: &Path) -> SweepConfig {
    serde_json::from_value(serde_json::json!({
        "problems": [
            {"model": "r1", "m": 30, "n": 5, "cond_kappa": 10, "p_fail": 0.2},
            {"model": "r2", "m": 30, "n": 5, "cond_kappa": 1, "p_fail": 0.3}
        ],
        "methods": ["SGD", "SGD-G", "SPL-R", "MD"],
        "theta_grid": [0.1, 1.0, 10.0],
        "seeds": [1, 2],
        "epochs": 20,
        "output_dir": dir,
    }))
    .unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modelopt"))
}

#[test]
fn two_seeds_give_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: SweepConfig = serde_json::from_value(serde_json::json!({
        "problems": [{"model": "r1", "m": 20, "n": 4, "cond_kappa": 1, "p_fail": 0.2}],
        "methods": ["SGD"], "theta_grid": [1.0], "seeds": [5, 6], "epochs": 3, "output_dir": dir.path(),
    }))
    .unwrap();
    let path = sweep(&cfg).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 3);
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn rerun_is_identical_apart_from_timing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = sweep(&small_config(a.path())).unwrap();
    let pb = sweep(&small_config(b.path())).unwrap();
    let (ta, tb) = (std::fs::read_to_string(pa).unwrap(), std::fs::read_to_string(pb).unwrap());
    assert_eq!(strip_timing(&ta), strip_timing(&tb));
}

#[test]
fn execution_order_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let forward = execute(&cfg).unwrap();
    let mut reversed = cells(&cfg);
    reversed.reverse();
    let backward = execute_cells(&cfg, &reversed).unwrap();
    let strip = |o: &[modelopt_bench::sweep::CellOutcome]| {
        let rows: Vec<SweepRow> = o.iter().map(|c| SweepRow { wall_time_ms: 0.0, ..c.row.clone() }).collect();
        rows_to_csv(&rows).unwrap()
    };
    assert_eq!(strip(&forward), strip(&backward));
}

#[test]
fn manifest_lists_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let path = sweep(&cfg).unwrap();
    let rows = read_results(&path).unwrap();
    let man: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man, manifest(&cfg));
    assert_eq!(man.cells.len(), rows.len());
    for r in &rows {
        assert!(man.cells.iter().any(|c| c.seed == r.seed && c.theta == r.theta && c.method == r.method && c.model == r.model));
        assert_eq!(r.converged, r.iters_to_converge.is_some());
    }
    assert_eq!(man.problems[0].horizon, 600);
}

#[test]
fn plots_have_one_panel_per_setting_and_one_marker_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let path = sweep(&cfg).unwrap();
    let figs = emit_plots(&path, &dir.path().join("fig")).unwrap();
    assert_eq!(figs.len(), 2);
    for f in &figs {
        let svg = std::fs::read_to_string(f).unwrap();
        assert!(svg.contains(r#"version="1.1""#));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches(r#"class="marker""#).count(), 12);
        for m in ["SGD", "SGD-G", "SPL-R", "MD"] {
            assert!(svg.contains(&format!(">{m}</text>")));
        }
    }
}

#[test]
fn single_cell_plot_and_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let row = SweepRow {
        model: ProblemKind::R3,
        method: Method::TruncR,
        theta: 0.5,
        seed: 1,
        cond_kappa: 1.0,
        p_fail: 0.2,
        converged: false,
        diverged: false,
        iters_to_converge: None,
        final_objective: 3.0,
        max_iterate_norm: 2.0,
        wall_time_ms: 1.0,
    };
    let one = dir.path().join("one.csv");
    std::fs::write(&one, rows_to_csv(&[row]).unwrap()).unwrap();
    let figs = emit_plots(&one, dir.path()).unwrap();
    assert_eq!(figs.len(), 1);
    let svg = std::fs::read_to_string(&figs[0]).unwrap();
    assert_eq!(svg.matches(r#"class="marker""#).count(), 1);
    assert_eq!(svg.matches(r#"data-capped="true""#).count(), 1);

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, CSV_HEADER.join(",") + "\n").unwrap();
    assert!(emit_plots(&empty, &dir.path().join("none")).unwrap().is_empty());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // invalid config → 1
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"problems":[],"methods":["SGD"],"seeds":[1]}"#).unwrap();
    assert_eq!(bin().args(["sweep", "-c"]).arg(&bad).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["sweep", "--bogus"]).status().unwrap().code(), Some(1));
    // missing file → 2
    assert_eq!(bin().args(["sweep", "-c", "/nonexistent/cfg.json"]).status().unwrap().code(), Some(2));
    // malformed CSV → nonzero
    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "a,b\n1,2\n").unwrap();
    assert_eq!(bin().arg("plot").arg(&junk).status().unwrap().code(), Some(1));
    // unwritable output directory → 2
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let status = bin()
        .args(["sweep", "--model", "r1", "--m", "10", "--n", "3", "--methods", "SGD", "--theta-grid", "1", "--epochs", "1", "--output-dir"])
        .arg(blocker.join("sub"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.txt");
    let ok = bin().args(["generate", "--model", "r1", "--m", "40", "--n", "6", "--seed", "3", "-o"]).arg(&inst).status().unwrap();
    assert!(ok.success());
    let trace = dir.path().join("trace.csv");
    let ok = bin()
        .args(["envelope-trace", "--instance"])
        .arg(&inst)
        .args(["--epochs", "4", "--points", "4", "-o"])
        .arg(&trace)
        .status()
        .unwrap();
    assert!(ok.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next(), Some("k,objective,envelope_grad_norm_sq"));
    assert_eq!(text.lines().count(), 6);

    let out = dir.path().join("sweep");
    let ok = bin()
        .args(["sweep", "--model", "r2", "--m", "30", "--n", "5", "--methods", "SGD,SGD-R", "--theta-grid", "0.1,1", "--seeds", "1,2", "--epochs", "5", "--output-dir"])
        .arg(&out)
        .env("MODELOPT_WORKERS", "2")
        .status()
        .unwrap();
    assert!(ok.success());
    let rows = read_results(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 8);
    let man: Manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man.config.workers, 2);
    let ok = bin().arg("plot").arg(out.join("results.csv")).arg("-o").arg(dir.path().join("figs")).status().unwrap();
    assert!(ok.success());

    let report = dir.path().join("convex.json");
    let ok = bin().args(["convex", "--seeds", "1,2", "--horizons", "50,500", "--output"]).arg(&report).status().unwrap();
    assert!(ok.success());
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["policies"].as_array().unwrap().len(), 3);
}

#[test]
fn convex_suite_zero_noise_start_at_solution_has_undefined_slope() {
    let cfg: ConvexConfig = serde_json::from_value(serde_json::json!({
        "seeds": [1, 2, 3], "p_fail": 0.0, "start_at_solution": true, "horizons": [50, 500]
    }))
    .unwrap();
    let rep = modelopt_bench::convex::convex_suite(&cfg).unwrap();
    for p in &rep.policies {
        assert!(p.horizons.iter().all(|h| h.mean_min_gap == 0.0));
        assert_eq!(p.slope, None);
    }
    let js = serde_json::to_value(&rep).unwrap();
    assert!(js["policies"][0]["slope"].is_null());
}

#[test]
fn convex_growth_policy_converges_at_the_largest_horizon() {
    let cfg: ConvexConfig = serde_json::from_value(serde_json::json!({
        "seeds": (1..=20).collect::<Vec<u64>>(), "horizons": [10000], "policies": ["growth"]
    }))
    .unwrap();
    let rep = modelopt_bench::convex::convex_suite(&cfg).unwrap();
    assert!(rep.policies[0].all_converged);
}

fn arb_row() -> impl Strategy<Value = SweepRow> {
    (
        prop::sample::select(vec![ProblemKind::R1, ProblemKind::R2, ProblemKind::R3, ProblemKind::LsConvex]),
        prop::sample::select(Method::ALL.to_vec()),
        1e-3f64..1e9,
        any::<u64>(),
        1.0f64..100.0,
        0.0f64..1.0,
        prop::option::of(0u64..1_000_000),
        any::<bool>(),
        prop::sample::select(vec![0.5, 1e300, f64::INFINITY, 1.0 / 3.0]),
        0.0f64..1e6,
    )
        .prop_map(|(model, method, theta, seed, cond_kappa, p_fail, iters, diverged, obj, wall)| SweepRow {
            model,
            method,
            theta,
            seed,
            cond_kappa,
            p_fail,
            converged: iters.is_some(),
            diverged: diverged && iters.is_none(),
            iters_to_converge: iters,
            final_objective: obj,
            max_iterate_norm: obj,
            wall_time_ms: wall,
        })
}

proptest! {
    #[test]
    fn csv_roundtrip(rows in prop::collection::vec(arb_row(), 0..20)) {
        let text = rows_to_csv(&rows).unwrap();
        prop_assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        prop_assert_eq!(rows_from_csv(&text).unwrap(), rows);
    }
}
