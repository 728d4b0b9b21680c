use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use twolines::cli::{parse_problem, read_policy, write_policy};
use twolines::solver::solve;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twolines"))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn cfg(name: &str) -> PathBuf {
    workspace_root().join("configs").join(name)
}

fn run_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed (status {:?})\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn threshold(stdout: &str, name: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name} = ")))
        .unwrap_or_else(|| panic!("no '{name}' line in:\n{stdout}"))
        .parse()
        .unwrap()
}

#[test]
fn solve_reports_capped_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["solve", "--config"])
        .arg(cfg("fig1.cfg"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let text = run_ok(&out);
    assert!(text.contains("case thresholds-above"), "{text}");
    assert!((threshold(&text, "w0") - 0.19).abs() < 0.01);
    assert!((threshold(&text, "u1") - 0.24).abs() < 0.01);
    assert!((threshold(&text, "u2") - 0.87).abs() < 0.01);
    assert!(dir.path().join("policy.txt").is_file());
}

#[test]
fn policy_document_round_trips_exactly() {
    for name in ["fig1.cfg", "fig3.cfg", "fig4.cfg", "fig5.cfg"] {
        let text = std::fs::read_to_string(cfg(name)).unwrap();
        let spec = parse_problem(&text, &workspace_root().join("configs")).unwrap();
        let policy = solve(&spec).unwrap();
        let reloaded = read_policy(&write_policy(&policy)).unwrap();
        let hi = policy.u2.unwrap_or(policy.u1) * 3.0 + 1.0;
        for i in 0..500 {
            let x = hi * (i as f64 + 0.5) / 500.0;
            let (g, g1, g2) = policy.value(x);
            let (h, h1, h2) = reloaded.value(x);
            let tol = 1e-12 * (1.0 + g.abs());
            assert!((g - h).abs() <= tol, "{name}: value drift at x={x}: {g} vs {h}");
            assert!((g1 - h1).abs() <= 1e-12 * (1.0 + g1.abs()), "{name}: slope drift at x={x}");
            assert!((g2 - h2).abs() <= 1e-12 * (1.0 + g2.abs()), "{name}: curvature drift at x={x}");
        }
    }
}

#[test]
fn malformed_config_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "[line1]\nkappa = 4\ndist = uniform:oops\n").unwrap();
    let out = bin().args(["solve", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "stderr should name the offending line: {err}");
}

#[test]
fn curve_grid_matches_request_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["curve", "--config"])
        .arg(cfg("fig2.cfg"))
        .arg("--out")
        .arg(dir.path())
        .args(["--grid", "0:2:9"])
        .output()
        .unwrap();
    run_ok(&out);
    for file in ["value.csv", "strategy.csv"] {
        let csv = std::fs::read_to_string(dir.path().join(file)).unwrap();
        let xs: Vec<f64> = csv
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(xs.len(), 9, "{file}");
        for (i, x) in xs.iter().enumerate() {
            assert_eq!(*x, 2.0 * i as f64 / 8.0, "{file} row {i}");
        }
        assert!(csv.lines().any(|l| l.starts_with("# threshold u2 = ")), "{file}");
    }
}

#[test]
fn weight_above_half_swaps_line_roles() {
    // a = 0.7 is the mirror of fig1's a = 0.3 with the lines exchanged:
    // the solver works in the swapped order and the CLI must report
    // curves back in the user's order.
    let dir = tempfile::tempdir().unwrap();
    let mirrored = "[line1]\nkappa = 2\ncbar = 2\ndist = uniform:1.5\n\
                    [line2]\nkappa = 4\ncbar = 3\ndist = uniform:1\n\
                    [model]\ndelta = 0.5\na = 0.7\nmode = capped\n";
    let path = dir.path().join("mirror.cfg");
    std::fs::write(&path, mirrored).unwrap();
    let out = bin()
        .args(["curve", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .args(["--grid", "0:1.5:7"])
        .output()
        .unwrap();
    let text = run_ok(&out);
    assert!(text.contains("lines swapped = true"), "{text}");
    assert!((threshold(&text, "u1") - 0.24).abs() < 0.01);
    assert!((threshold(&text, "u2") - 0.87).abs() < 0.01);

    let base = bin()
        .args(["curve", "--config"])
        .arg(cfg("fig1.cfg"))
        .arg("--out")
        .arg(dir.path().join("base").as_path())
        .args(["--grid", "0:1.5:7"])
        .output()
        .unwrap();
    run_ok(&base);
    let rows = |p: PathBuf| -> Vec<Vec<f64>> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let m = rows(dir.path().join("strategy.csv"));
    let b = rows(dir.path().join("base/strategy.csv"));
    for (rm, rb) in m.iter().zip(&b) {
        // mirrored line 1 is fig1's line 2 and vice versa
        assert!((rm[1] - rb[2]).abs() < 1e-9 && (rm[2] - rb[1]).abs() < 1e-9, "{rm:?} vs {rb:?}");
        assert!((rm[3] - rb[4]).abs() < 1e-9 && (rm[4] - rb[3]).abs() < 1e-9, "{rm:?} vs {rb:?}");
    }
}

#[test]
fn simulate_rejects_zero_paths() {
    let out = bin()
        .args(["simulate", "--config"])
        .arg(cfg("fig1.cfg"))
        .args(["--paths", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn env_variables_stand_in_for_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("simulate")
        .env("TWOLINES_CONFIG", cfg("fig1.cfg"))
        .env("TWOLINES_OUT", dir.path())
        .env("TWOLINES_PATHS", "500")
        .env("TWOLINES_DT", "0.01")
        .env("TWOLINES_SEED", "3")
        .output()
        .unwrap();
    let text = run_ok(&out);
    assert!(text.contains("paths = 500"), "{text}");
    assert!(text.contains("seed = 3"), "{text}");
    assert!(dir.path().join("estimate.csv").is_file());
}

#[test]
fn simulate_tracks_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(cfg("fig1.cfg"))
        .arg("--out")
        .arg(dir.path())
        .args(["--paths", "4000", "--dt", "0.002", "--seed", "7", "--start", "0.5,0.5"])
        .output()
        .unwrap();
    let text = run_ok(&out);
    let mean = threshold(&text, "mean");
    let stderr = threshold(&text, "stderr");
    let reference = threshold(&text, "closed_form");
    assert!((mean - reference).abs() < 4.0 * stderr + 0.02, "{text}");
}

#[test]
fn verify_passes_on_a_reduced_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify", "--config"])
        .arg(cfg("fig2.cfg"))
        .arg("--out")
        .arg(dir.path())
        .args(["--grid", "201", "--seed", "5"])
        .output()
        .unwrap();
    let text = run_ok(&out);
    assert!(text.contains("all checks passed"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.lines().count() > 10);
    assert!(!csv.contains(",fail"), "{csv}");
}
