//! Black-box checks of the command-line interface: argument and file
//! handling, seed precedence, exit codes, and the shape of everything the
//! binary writes to its streams and to disk.

use std::fs;
use std::process::{Command, Output};

use macsim::experiment::CSV_HEADER;

fn macsim() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_macsim"));
    // Keep the host environment from leaking a seed into the tests.
    c.env_remove("MACSIM_SEED");
    c
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(cmd: &mut Command, code: i32) -> Output {
    let out = cmd.output().expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

#[test]
fn run_emits_csv_summary_and_metadata() {
    let out = run_ok(macsim().args(["run", "--duration_s", "1", "--replications", "1"]));
    let body = stdout(&out);
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3, "header plus one row per priority class");
    assert!(lines[1].starts_with("bop,2,0,urgent,"));
    assert!(lines[2].starts_with("bop,2,0,normal,"));
    let meta = stderr(&out);
    assert!(meta.starts_with("# macsim "), "metadata line: {meta}");
    assert!(meta.contains("prng=chacha12"));
    assert!(meta.contains("ack_turnaround_ns=0"));
    assert!(meta.contains("duration_s=1"));
}

#[test]
fn run_writes_output_file_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = run_ok(macsim().args([
        "run",
        "--duration_s",
        "1",
        "--replications",
        "1",
        "--output",
        path.to_str().unwrap(),
    ]));
    assert!(stdout(&out).is_empty(), "CSV goes to the file, not stdout");
    let written = fs::read_to_string(&path).unwrap();
    assert!(written.starts_with(CSV_HEADER));
    assert!(stderr(&out).contains("# wrote "));
}

#[test]
fn seed_precedence_env_over_flag_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "master_seed = 5\nduration_s = 1\nreplications = 1\n").unwrap();
    let file_only = run_ok(macsim().args(["validate", "--config", cfg.to_str().unwrap()]));
    assert!(stdout(&file_only).contains("master_seed=5 "));

    let flagged = run_ok(macsim().args([
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--master_seed",
        "7",
    ]));
    assert!(stdout(&flagged).contains("master_seed=7 "));

    let env_set = run_ok(
        macsim()
            .args([
                "validate",
                "--config",
                cfg.to_str().unwrap(),
                "--master_seed",
                "7",
            ])
            .env("MACSIM_SEED", "9"),
    );
    assert!(stdout(&env_set).contains("master_seed=9 "));
}

#[test]
fn unparsable_seed_env_is_a_configuration_error() {
    let out = run_err(macsim().arg("validate").env("MACSIM_SEED", "banana"), 1);
    assert!(stderr(&out).contains("MACSIM_SEED"));
}

#[test]
fn config_file_diagnostics_name_the_offending_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");

    fs::write(&cfg, "node_count = banana\n").unwrap();
    let out = run_err(macsim().args(["validate", "--config", cfg.to_str().unwrap()]), 1);
    assert!(stderr(&out).contains("line 1"), "stderr: {}", stderr(&out));

    fs::write(&cfg, "# comment\nnot_a_key = 3\n").unwrap();
    let out = run_err(macsim().args(["validate", "--config", cfg.to_str().unwrap()]), 1);
    assert!(stderr(&out).contains("line 2"), "stderr: {}", stderr(&out));

    let missing = dir.path().join("absent.cfg");
    run_err(macsim().args(["validate", "--config", missing.to_str().unwrap()]), 1);
}

#[test]
fn invalid_flag_values_exit_as_configuration_errors() {
    let out = run_err(macsim().args(["validate", "--node_count", "1"]), 1);
    assert!(stderr(&out).contains("node_count"));
    let out = run_err(macsim().args(["validate", "--protocol", "quux"]), 1);
    assert!(stderr(&out).contains("quux"));
}

#[test]
fn usage_errors_and_help_use_distinct_exit_codes() {
    run_err(macsim().args(["run", "--bogus"]), 1);
    run_err(macsim().arg("frobnicate"), 1);
    run_ok(macsim().arg("--help"));
    run_ok(macsim().arg("--version"));
}

#[test]
fn figures_writes_four_files_with_matching_views() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(macsim().args([
        "figures",
        "--duration_s",
        "1",
        "--replications",
        "1",
        "--output",
        dir.path().to_str().unwrap(),
    ]));
    let read = |name: &str| fs::read_to_string(dir.path().join(name)).unwrap();
    let a = read("fig4a.csv");
    let b = read("fig4b.csv");
    assert_eq!(a, read("fig5a.csv"), "delay and throughput views share rows");
    assert_eq!(b, read("fig5b.csv"));
    assert_eq!(a.lines().count(), 41, "header plus 40 rows");
    assert!(a.contains("\nfrog,11,16,"));
    assert!(b.contains("\nfrog,11,2,"));
}

#[test]
fn trace_respects_limit_and_reports_totals() {
    let out = run_ok(macsim().args(["trace", "--duration_s", "1", "--limit", "50"]));
    let body = stdout(&out);
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 50);
    // Sequence numbers are assigned when events are scheduled, so dispatch
    // order is the (time, seq) pair, not seq alone.
    let mut last = None;
    for line in &lines {
        let fields: Vec<&str> = line.splitn(4, ',').collect();
        assert_eq!(fields.len(), 4, "time_ns,seq,target,action: {line}");
        let time: u64 = fields[0].parse().expect("time_ns");
        let seq: u64 = fields[1].parse().expect("seq");
        assert!(Some((time, seq)) > last, "dispatch follows (time, seq) order");
        last = Some((time, seq));
    }
    let meta = stderr(&out);
    assert!(meta.contains("# events_dispatched="));
    assert!(meta.contains("trace_lines=50"));
}

#[test]
fn trace_replays_identically_for_one_seed() {
    let args = ["trace", "--duration_s", "1", "--limit", "200", "--master_seed", "11"];
    let first = run_ok(macsim().args(args));
    let second = run_ok(macsim().args(args));
    assert_eq!(stdout(&first), stdout(&second));
}
