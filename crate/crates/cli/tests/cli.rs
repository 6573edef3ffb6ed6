use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sinklimit::game::ResponseGraph;
use sinklimit::known_games::{cycle_game, tied_exit_game};
use sinklimit::{limit_hitting_probabilities, Game};

fn games_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../games")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sinklimit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&run_ok(args)).unwrap()
}

fn game_path(name: &str) -> String {
    games_dir().join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn assert_failure(out: &Output, code: i32, prefix: &str, needle: &str) {
    assert_eq!(out.status.code(), Some(code));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with(prefix), "{stderr}");
    assert!(stderr.contains(needle), "{stderr}");
}

#[test]
fn bundled_game_files_match_known_games() {
    let read = |n: &str| Game::from_json(&std::fs::read_to_string(game_path(n)).unwrap()).unwrap();
    assert_eq!(read("cycle.json"), cycle_game());
    assert_eq!(read("tied_exit.json"), tied_exit_game());
}

#[test]
fn sinks_of_example_games() {
    let v = json(&["sinks", &game_path("cycle.json")]);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["sinks"], serde_json::json!([[0, 1, 3, 4], [8]]));
    assert_eq!(v["sink_profiles"][1], serde_json::json!(["(3,3)"]));
    let full = json(&["sinks", "--full-graph", &game_path("cycle.json")]);
    assert_eq!(full["sinks"], v["sinks"]);

    let v = json(&["sinks", &game_path("tied_exit.json")]);
    assert_eq!(
        v["sink_profiles"],
        serde_json::json!([["(1,1)"], ["(2,2)"]])
    );
}

#[test]
fn sinks_of_trivial_game() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "g.json",
        r#"{"players":2,"strategies":[1,1],"utilities":[[3],[-1]]}"#,
    );
    let v = json(&["sinks", &g]);
    assert_eq!(v["sink_labels"], serde_json::json!(["sink_0 {(1,1)}"]));
}

#[test]
fn hit_rows_for_tied_exit() {
    let v = json(&["hit", &game_path("tied_exit.json")]);
    let row = &v["rows"]["(3,3)"];
    assert_eq!(row["sink_0 {(1,1)}"].as_f64().unwrap(), 1.0);
    assert_eq!(row["sink_1 {(2,2)}"].as_f64().unwrap(), 0.0);
    assert_eq!(v["rows"]["(2,2)"]["sink_1 {(2,2)}"].as_f64().unwrap(), 1.0);
    assert_eq!(v["collapse"]["rounds"].as_array().unwrap().len(), 1);
    // emitted numbers parse back to the exact library values
    let exact = limit_hitting_probabilities(&tied_exit_game(), 0.0).unwrap();
    let labels = ["sink_0 {(1,1)}", "sink_1 {(2,2)}"];
    for (p, r) in exact.rows.iter().enumerate() {
        let key = tied_exit_game().label(sinklimit::ProfileId(p));
        for (k, &x) in r.iter().enumerate() {
            assert_eq!(
                v["rows"][&key][labels[k]].as_f64().unwrap().to_bits(),
                x.to_bits()
            );
        }
    }
}

#[test]
fn hit_matches_oracle_flag_on_tie_free_game() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "g.json",
        &run_ok(&[
            "random-game",
            "--seed",
            "5",
            "--players",
            "3",
            "--strategies",
            "3",
        ]),
    );
    let limit = json(&["hit", &g]);
    let oracle = json(&["hit", &g, "--oracle-eps", "1e-8"]);
    assert_eq!(oracle["method"]["kind"], "oracle");
    for (key, row) in limit["rows"].as_object().unwrap() {
        for (sink, p) in row.as_object().unwrap() {
            let q = oracle["rows"][key][sink].as_f64().unwrap();
            assert!((p.as_f64().unwrap() - q).abs() < 1e-6);
        }
    }
}

#[test]
fn limit_exact_path_averages_rows() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "w.json", "[0.25,0,0,0,0,0,0,0,0.75]");
    let v = json(&[
        "limit",
        &game_path("tied_exit.json"),
        "--prior",
        &format!("pure:{w}"),
    ]);
    assert_eq!(v["method"]["kind"], "exact");
    let h = limit_hitting_probabilities(&tied_exit_game(), 0.0).unwrap();
    let expect = 0.25 * h.rows[0][0] + 0.75 * h.rows[8][0];
    let got = v["distribution"]["sink_0 {(1,1)}"].as_f64().unwrap();
    assert!((got - expect).abs() < 1e-12);
    assert_eq!(expect, 1.0);
}

#[test]
fn limit_uniform_on_single_sink_game() {
    let dir = tempfile::tempdir().unwrap();
    // the second strategy dominates for both players
    let g = write(
        dir.path(),
        "g.json",
        r#"{"players":2,"strategies":[2,2],"utilities":[[0,1,0,1],[0,0,1,1]]}"#,
    );
    let v = json(&["limit", &g, "--seed", "1", "--runs-per-sample", "5"]);
    assert_eq!(v["method"]["kind"], "simulation");
    assert_eq!(v["distribution"]["sink_0 {(2,2)}"].as_f64().unwrap(), 1.0);
    assert_eq!(v["converged"], true);
}

#[test]
fn simulation_output_is_deterministic() {
    let g = game_path("cycle.json");
    let args = [
        "simulate",
        &g,
        "--seed",
        "17",
        "--runs-per-sample",
        "4",
        "--max-samples",
        "50",
        "--batch-size",
        "10",
    ];
    let a = run_ok(&args);
    let b = run_ok(&args);
    assert_eq!(a, b);
    let serial = run_ok(&[&args[..], &["--serial"]].concat());
    assert_eq!(a, serial);
    let threaded = Command::new(env!("CARGO_BIN_EXE_sinklimit"))
        .args(args)
        .env("SINKLIMIT_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(threaded.stdout).unwrap(), a);
}

#[test]
fn simulate_accepts_pure_priors() {
    let dir = tempfile::tempdir().unwrap();
    let w = write(dir.path(), "w.json", r#"{"weights":[0,0,0,0,0,0,0,0,1]}"#);
    let v = json(&[
        "simulate",
        &game_path("cycle.json"),
        "--prior",
        &format!("pure:{w}"),
        "--seed",
        "3",
        "--runs-per-sample",
        "3",
    ]);
    assert_eq!(v["method"]["kind"], "simulation");
    assert_eq!(v["distribution"]["sink_1 {(3,3)}"].as_f64().unwrap(), 1.0);
}

#[test]
fn input_errors_exit_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"players":2,"strategies":[2,2],"utilities":[[0,1,0,1],[0,0,1]]}"#,
    );
    assert_failure(&run(&["sinks", &bad]), 2, "error[input]:", "utilities[1]");
    let garbled = write(dir.path(), "garbled.json", "{");
    assert_failure(&run(&["hit", &garbled]), 2, "error[input]:", "json");
    let g = game_path("cycle.json");
    assert_failure(
        &run(&["limit", &g, "--prior", "beta:2"]),
        2,
        "error[input]:",
        "prior",
    );
    assert_failure(&run(&["limit", &g]), 2, "error[input]:", "seed");
    let w = write(dir.path(), "w.json", "[0.5,0.4,0,0,0,0,0,0,0]");
    assert_failure(
        &run(&["limit", &g, "--prior", &format!("pure:{w}")]),
        2,
        "error[input]:",
        "sum",
    );
    assert_failure(
        &run(&["sinks", "/nonexistent/game.json"]),
        2,
        "error[input]:",
        "game",
    );
    assert_failure(
        &run(&[
            "random-game",
            "--seed",
            "1",
            "--players",
            "2",
            "--strategies",
            "2",
            "--mode",
            "gaussian",
        ]),
        2,
        "error[input]:",
        "mode",
    );
    let out = Command::new(env!("CARGO_BIN_EXE_sinklimit"))
        .args(["sinks", &g])
        .env("SINKLIMIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_failure(&out, 2, "error[input]:", "SINKLIMIT_THREADS");
}

#[test]
fn numerical_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "g.json",
        r#"{"players":1,"strategies":[4],"utilities":[[0,0,0,1]]}"#,
    );
    assert_failure(
        &run(&["hit", &g, "--oracle-eps", "0.6"]),
        3,
        "error[numeric]:",
        "epsilon",
    );
}

#[test]
fn random_game_is_reproducible_and_integer_mode_has_ties() {
    let a = run_ok(&[
        "random-game",
        "--seed",
        "9",
        "--players",
        "2",
        "--strategies",
        "2",
    ]);
    let b = run_ok(&[
        "random-game",
        "--seed",
        "9",
        "--players",
        "2",
        "--strategies",
        "2",
    ]);
    assert_eq!(a, b);
    let g = Game::from_json(&a).unwrap();
    assert_eq!(g.strategy_counts(), &[2, 2]);
    let mixed = run_ok(&[
        "random-game",
        "--seed",
        "9",
        "--players",
        "3",
        "--strategies",
        "2,3,4",
    ]);
    assert_eq!(Game::from_json(&mixed).unwrap().num_profiles(), 24);

    let with_ties = (0..20)
        .filter(|seed| {
            let text = run_ok(&[
                "random-game",
                "--seed",
                &seed.to_string(),
                "--players",
                "2",
                "--strategies",
                "3",
                "--mode",
                "integer:2",
            ]);
            !ResponseGraph::build(&Game::from_json(&text).unwrap(), 0.0)
                .tie_edges
                .is_empty()
        })
        .count();
    assert!(with_ties >= 15, "{with_ties}/20");
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let stdout = run_ok(&[
        "sinks",
        &game_path("tied_exit.json"),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.is_empty());
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        run_ok(&["sinks", &game_path("tied_exit.json")])
    );
}

/// Minimal structural DOT check: one digraph block, every statement a node
/// or edge declaration with balanced quotes and brackets, edges only between
/// declared nodes.
fn check_dot(text: &str) -> (usize, Vec<(String, String, String)>) {
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("digraph ") && lines[0].ends_with('{'));
    assert_eq!(*lines.last().unwrap(), "}");
    let mut nodes = std::collections::BTreeSet::new();
    let mut edges = Vec::new();
    for line in &lines[1..lines.len() - 1] {
        let s = line.trim();
        assert!(s.ends_with("];"), "{s}");
        assert_eq!(s.matches('"').count() % 2, 0, "{s}");
        let (head, attrs) = s.split_once(" [").unwrap();
        if head == "node" || head == "edge" {
            continue;
        }
        if let Some((a, b)) = head.split_once(" -> ") {
            assert!(nodes.contains(a) && nodes.contains(b), "{s}");
            let label = attrs
                .split("label=\"")
                .nth(1)
                .unwrap()
                .split('"')
                .next()
                .unwrap();
            edges.push((a.to_string(), b.to_string(), label.to_string()));
        } else {
            assert!(head.chars().all(|c| c.is_ascii_alphanumeric()), "{s}");
            nodes.insert(head.to_string());
        }
    }
    (nodes.len(), edges)
}

#[test]
fn export_dot_for_tied_exit() {
    let dir = tempfile::tempdir().unwrap();
    let g = game_path("tied_exit.json");
    let hit = write(dir.path(), "h.json", &run_ok(&["hit", &g]));
    let dot = run_ok(&["export-dot", &g, "--hitting", &hit]);
    let (nodes, edges) = check_dot(&dot);
    assert_eq!(nodes, 9);
    // (3,3) is n8 and (3,1) is n2
    assert!(edges.contains(&("n8".into(), "n2".into(), "0.00".into())));
    assert!(edges.contains(&("n2".into(), "n8".into(), "0.00".into())));
    assert!(dot.contains("style=wedged"));
    assert_eq!(dot, run_ok(&["export-dot", &g, "--hitting", &hit]));
}

#[test]
fn export_dot_single_sink_pies_have_one_color() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "g.json",
        r#"{"players":2,"strategies":[2,2],"utilities":[[0,1,0,1],[0,0,1,1]]}"#,
    );
    let hit = write(dir.path(), "h.json", &run_ok(&["hit", &g]));
    let dot = run_ok(&["export-dot", &g, "--hitting", &hit]);
    check_dot(&dot);
    for line in dot.lines().filter(|l| l.contains("wedged")) {
        assert!(!line.contains(':'), "{line}");
    }
}

#[test]
fn export_dot_rejects_mismatched_hitting() {
    let dir = tempfile::tempdir().unwrap();
    let hit = write(
        dir.path(),
        "h.json",
        &run_ok(&["hit", &game_path("cycle.json")]),
    );
    assert_failure(
        &run(&[
            "export-dot",
            &game_path("tied_exit.json"),
            "--hitting",
            &hit,
        ]),
        2,
        "error[input]:",
        "rows",
    );
}

#[test]
fn cycle_row_regression() {
    let v = json(&["hit", &game_path("cycle.json")]);
    let row = &v["rows"]["(3,1)"];
    assert_eq!(
        row["sink_0 {(1,1),(2,1),(1,2),(2,2)}"].as_f64().unwrap(),
        0.75
    );
    assert_eq!(row["sink_1 {(3,3)}"].as_f64().unwrap(), 0.25);
}
