use std::path::Path;
use std::process::{Command, Output};

fn uss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uss"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn field(text: &str, label: &str) -> f64 {
    text.lines()
        .find(|l| l.starts_with(label))
        .and_then(|l| l[label.len()..].trim().parse().ok())
        .unwrap_or_else(|| panic!("no {label} in\n{text}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_prints_hand_values() {
    let out = uss(&["solve", "--n", "2", "--d", "0", "--grid", "2001"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!((field(&text, "v_1(0,0)") - 1.5).abs() < 1e-3);
    assert!(text.contains("1.500000"));

    let text = stdout(&uss(&["solve", "--n", "1", "--d", "1", "--grid", "101"]));
    assert!(text.contains("v_1(0,0)                1.000000"));
}

#[test]
fn solve_large_instance_stays_below_upper_bound() {
    let text = stdout(&uss(&[
        "solve", "--n", "1000", "--d", "1", "--grid", "1001",
    ]));
    let v = field(&text, "v_1(0,0)");
    assert!(v < 63.246, "{v}");
    assert!((field(&text, "upper bound") - 63.245553).abs() < 1e-6);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(uss(&["solve", "--n", "0"]).status.code(), Some(2));
    assert_eq!(uss(&["solve", "--grid", "5"]).status.code(), Some(2));
    assert_eq!(
        uss(&["simulate", "--n", "5", "--reps", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(uss(&["nonsense"]).status.code(), Some(2));
    assert_eq!(
        uss(&["solve", "--n", "3", "--table-out", "/no/such/dir/t.uss"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        uss(&["simulate", "--n", "3", "--table", "/no/such/file.uss"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_reuses_tables_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.uss");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let out = uss(&[
        "solve",
        "--n",
        "80",
        "--d",
        "1",
        "--grid",
        "401",
        "--table-out",
        path_str(&table),
    ]);
    assert!(out.status.success());
    for target in [&a, &b] {
        let out = uss(&[
            "simulate",
            "--n",
            "80",
            "--d",
            "1",
            "--grid",
            "401",
            "--table",
            path_str(&table),
            "--reps",
            "300",
            "--seed",
            "17",
            "--report-out",
            path_str(target),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let ja = std::fs::read(&a).unwrap();
    assert_eq!(ja, std::fs::read(&b).unwrap());

    let doc: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    assert_eq!(doc["format"], "uss-report-1");
    assert_eq!(doc["batches"][0]["base_seed"], 17);
    assert_eq!(doc["batches"][0]["reps"], 300);

    // the stored table is for n = 80
    let out = uss(&[
        "simulate",
        "--n",
        "81",
        "--d",
        "1",
        "--grid",
        "401",
        "--table",
        path_str(&table),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_run_has_zero_variance() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("s.json");
    let out = uss(&[
        "simulate",
        "--n",
        "30",
        "--grid",
        "201",
        "--reps",
        "1",
        "--report-out",
        path_str(&json),
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(doc["batches"][0]["sample_variance"], 0.0);
}

#[test]
fn trajectories_are_dumped_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = uss(&[
        "simulate",
        "--n",
        "40",
        "--grid",
        "201",
        "--reps",
        "5",
        "--trajectory-dir",
        path_str(dir.path()),
        "--trajectories",
        "3",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("trajectory_00002.csv")).unwrap();
    assert!(text.starts_with("step,x,a,b,accepted,s,k,y,d_inc\n"));
    assert_eq!(text.lines().count(), 41);
    assert!(!dir.path().join("trajectory_00003.csv").exists());
}

#[test]
fn heuristic_trails_optimal() {
    let run = |policy: &str| {
        let text = stdout(&uss(&[
            "simulate", "--n", "400", "--d", "1", "--grid", "801", "--reps", "2000", "--seed", "3",
            "--policy", policy,
        ]));
        (field(&text, "sample mean"), field(&text, "stderr of mean"))
    };
    let (opt, se_o) = run("optimal");
    let (heu, se_h) = run("heuristic");
    assert!(heu < opt + 3.0 * se_o.hypot(se_h), "{heu} vs {opt}");
}

#[test]
fn compare_reports_prophet_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("c.json");
    let csv = dir.path().join("c.csv");
    let out = uss(&[
        "compare",
        "--n",
        "1000",
        "--d",
        "1",
        "--grid",
        "1001",
        "--reps",
        "1000",
        "--seed",
        "9",
        "--report-out",
        path_str(&json),
        "--csv-out",
        path_str(&csv),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ratio = field(&stdout(&out), "prophet ratio");
    assert!((1.25..=1.55).contains(&ratio), "{ratio}");

    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(doc["format"], "uss-report-1");
    assert!(doc["bounds"][0]["violations"]
        .as_array()
        .unwrap()
        .is_empty());
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("n,d,policy,"));
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn compare_monotone_case_and_degenerate_horizon() {
    let text = stdout(&uss(&[
        "compare", "--n", "1000", "--d", "0", "--grid", "1001", "--reps", "500",
    ]));
    let scaled = field(&text, "on-line mean / sqrt(n)");
    assert!((1.0..=1.415).contains(&scaled), "{scaled}");

    let out = uss(&[
        "compare", "--n", "1", "--d", "1", "--grid", "11", "--reps", "20",
    ]);
    assert!(out.status.success());
    assert_eq!(field(&stdout(&out), "prophet ratio"), 1.0);
}

#[test]
fn tight_slack_is_an_invariant_violation() {
    // no slack and a large negative offset: the lower bound exceeds the value
    let out = uss(&[
        "compare",
        "--n",
        "50",
        "--d",
        "0",
        "--grid",
        "201",
        "--reps",
        "50",
        "--c-slack=-40",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lower bound"));
}

#[test]
fn offline_on_a_file_and_on_a_batch() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    std::fs::write(&input, "0.5\n0.1\n0.9\n").unwrap();
    let out = uss(&[
        "offline",
        "--input",
        path_str(&input),
        "--d",
        "1",
        "--orientation",
        "up-first",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(field(&text, "u_n"), 2.0);
    assert_eq!(field(&text, "d_n"), 3.0);
    assert_eq!(field(&text, "l_n"), 3.0);
    assert_eq!(field(&text, "d-modal (d=1)"), 2.0);

    std::fs::write(&input, "0.5\n0.1\n0.5\n").unwrap();
    assert_eq!(
        uss(&["offline", "--input", path_str(&input)]).status.code(),
        Some(2)
    );

    let text = stdout(&uss(&[
        "offline", "--n", "2000", "--reps", "20", "--seed", "4",
    ]));
    let mean = field(&text, "mean l_n");
    let target = field(&text, "2 (2n)^(1/2)");
    assert!((mean / target - 1.0).abs() < 0.15, "{mean} vs {target}");
}

#[test]
fn report_covers_the_requested_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = uss(&[
        "report",
        "--n",
        "50,200",
        "--d",
        "0,1",
        "--grid",
        "401",
        "--reps",
        "1000",
        "--policy",
        "optimal,heuristic",
        "--report-out",
        path_str(&json),
        "--csv-out",
        path_str(&csv),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 2 * 2);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(doc["bounds"].as_array().unwrap().len(), 8);
    assert_eq!(doc["conjectures"].as_array().unwrap().len(), 8);
}
