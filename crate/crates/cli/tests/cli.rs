use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ecoplus(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecoplus"))
        .args(args)
        .current_dir(dir)
        .env("ECOPLUS_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn solve_then_validate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (model, strategy, vd, tm) in [
        ("cpem", "ecoplus", "8", "18"),
        ("cpem", "vm", "6", "14"),
        ("kmmk", "dc", "10", "12"),
        ("kmmk", "am", "8", "20"),
    ] {
        let file = format!("{model}_{strategy}.csv");
        let out = ecoplus(
            &[
                "solve",
                "--model",
                model,
                "--strategy",
                strategy,
                "--vd",
                vd,
                "--tm",
                tm,
                "--out",
                &file,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", text(&out.stderr));
        assert!(text(&out.stdout).contains("status optimal"));
        let out = ecoplus(&["validate", "--model", model, "--vd", vd, &file], dir.path());
        assert!(out.status.success(), "{model} {strategy}: {}", text(&out.stdout));
        assert!(text(&out.stdout).contains("valid"));
    }
}

#[test]
fn corrupted_trajectory_is_rejected_with_named_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecoplus(&["solve", "--vd", "8", "--tm", "18", "--out", "t.csv"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(String::from).collect();
    // push one interior speed above the limit
    let mut cols: Vec<String> = lines[50].split(',').map(String::from).collect();
    cols[3] = "16".into();
    lines[50] = cols.join(",");
    fs::write(dir.path().join("bad.csv"), lines.join("\n") + "\n").unwrap();
    let out = ecoplus(&["validate", "--vd", "8", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("violated: velocity-bound"), "{err}");
    assert!(err.contains("violated: velocity-update"), "{err}");
}

#[test]
fn wrong_terminal_speed_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecoplus(&["solve", "--vd", "8", "--tm", "15", "--out", "t.csv"], dir.path());
    assert!(out.status.success());
    let out = ecoplus(&["validate", "--vd", "10", "t.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("violated: final-velocity"));
}

#[test]
fn sweep_writes_fixed_schema_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecoplus(
        &[
            "sweep",
            "--model",
            "cpem",
            "--strategy",
            "ecoplus,vm",
            "--vd",
            "6",
            "--tm",
            "15",
            "--tm-max",
            "15.5",
            "--out",
            "res",
            "--check",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/single_cpem_vd6.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("tm,strategy,model,consumption,objective,status,solve_ms")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    assert!(rows[0].starts_with("15,ecoplus,cpem,"));
    assert!(rows.iter().all(|r| r.contains(",optimal,")));
    let summary = text(&out.stdout);
    assert!(summary.contains("             vm        ecoplus"), "{summary}");
    assert!(dir.path().join("res/single_cpem_summary.txt").exists());
}

#[test]
fn effective_config_echo_shows_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecoplus(&["solve", "--vd", "8", "--tm", "18", "--out", "t.csv"], dir.path());
    let err = text(&out.stderr);
    for line in [
        "length = 100.0",
        "v_init = 8.0",
        "v_max = 15.0",
        "u_min = -3.5",
        "u_max = 2.5",
        "j_min = -10.0",
        "j_max = 10.0",
        "dt = 0.1",
        "segments = 5",
        "time_gap = 4.0",
        "c_r = 1.75",
        "eta_battery = 0.9",
        "mu = 0.015",
    ] {
        assert!(err.contains(line), "missing `{line}` in\n{err}");
    }
}

#[test]
fn config_file_overrides_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("ok.toml"),
        "[road]\nlength = 80.0\n[pwa]\nsegments = 8\n",
    )
    .unwrap();
    let out = ecoplus(
        &[
            "solve", "--config", "ok.toml", "--vd", "8", "--tm", "15", "--out", "t.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let err = text(&out.stderr);
    assert!(err.contains("length = 80.0") && err.contains("segments = 8"));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("150,15,80,8,"));

    fs::write(dir.path().join("bad.toml"), "[road]\nlenght = 80.0\n").unwrap();
    let out = ecoplus(
        &["solve", "--config", "bad.toml", "--vd", "8", "--tm", "15"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("lenght"));
}

#[test]
fn infeasible_travel_time_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecoplus(&["solve", "--vd", "8", "--tm", "1", "--out", "t.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("infeasible"));
}

#[test]
fn leading_scenario_short_sweep_passes_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecoplus(
        &[
            "scenario", "--family", "leading", "--model", "kmmk", "--tm", "22", "--tm-max", "22.2", "--out", "res",
            "--check",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/leading_kmmk_vd10.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(text(&out.stdout).contains("audit failures: 0"));
}

#[test]
fn unknown_strategy_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecoplus(&["solve", "--strategy", "nls", "--vd", "8", "--tm", "18"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("unknown strategy"));
}

#[test]
fn sweep_defaults_to_three_terminal_speeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecoplus(
        &[
            "sweep",
            "--strategy",
            "ecoplus",
            "--tm",
            "16",
            "--tm-max",
            "16.1",
            "--out",
            "res",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    for vd in [6, 8, 10] {
        assert!(
            dir.path().join(format!("res/single_cpem_vd{vd}.csv")).exists(),
            "v_d={vd}"
        );
    }
}
