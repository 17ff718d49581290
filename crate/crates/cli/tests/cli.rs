//! End-to-end tests of the `measure-infinity` binary: exit codes, artifact
//! shape, diagnostics, and the resolved-config round-trip guarantee.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_measure-infinity"))
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("spawn binary");
    (
        out.status.code().expect("exit code"),
        String::from_utf8(out.stdout).expect("utf8 stdout"),
        String::from_utf8(out.stderr).expect("utf8 stderr"),
    )
}

fn run_with_config(args: &[&str], config: &str) -> (i32, String, String) {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, config).expect("write config");
    let mut full: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    full.push("--config".into());
    full.push(path.display().to_string());
    let out = bin().args(&full).output().expect("spawn binary");
    (
        out.status.code().expect("exit code"),
        String::from_utf8(out.stdout).expect("utf8 stdout"),
        String::from_utf8(out.stderr).expect("utf8 stderr"),
    )
}

#[test]
fn volume_defaults_report_unit_volume() {
    let (code, stdout, _) = run_cli(&["volume"]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("\"kind\": \"Finite\""));
    assert!(stdout.contains("\"value\": 1.0"));
    assert!(stdout.contains("\"verdict\": \"pass\""));
}

#[test]
fn volume_classifies_growing_and_oscillating_products() {
    let (code, stdout, _) = run_with_config(&["volume"], "upper = constant(2)\n");
    assert_eq!(code, 0);
    assert!(stdout.contains("\"kind\": \"Infinite\""));

    let (code, stdout, _) = run_with_config(&["volume"], "upper = periodic(0.5, 2)\n");
    assert_eq!(code, 0);
    assert!(stdout.contains("\"kind\": \"Undefined\""));
}

#[test]
fn malformed_sequence_literal_is_an_input_error() {
    let (code, _, stderr) = run_with_config(&["volume"], "upper = blorp(3)\n");
    assert_eq!(code, 2);
    assert!(stderr.contains("unknown tail kind"), "stderr: {stderr}");
    assert!(stderr.contains("line 1"), "stderr: {stderr}");
}

#[test]
fn unknown_keys_are_rejected_with_their_line() {
    let (code, _, stderr) = run_with_config(&["cover"], "epsilon = 0.5\nbananas = 7\n");
    assert_eq!(code, 2);
    assert!(
        stderr.contains("unknown config key 'bananas' (line 2)"),
        "stderr: {stderr}"
    );
}

#[test]
fn cover_defaults_certify_the_exact_total() {
    let (code, stdout, _) = run_cli(&["cover"]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("# total = 0.4999995231628418"));
    assert!(stdout.contains("# verdict = pass"));
}

#[test]
fn json_configs_are_accepted() {
    let (code, stdout, _) =
        run_with_config(&["cover"], "{\"epsilon\": 0.25, \"levels\": 10}\n");
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("# epsilon = 0.25"));
    assert!(stdout.contains("# levels = 10"));
    assert!(stdout.contains("# verdict = pass"));
}

#[test]
fn dieudonne_example_parameters_fail_honestly() {
    let (code, stdout, _) = run_with_config(
        &["dieudonne", "--c", "0.01", "--stages", "3"],
        "max_rows = 2000\n",
    );
    assert_eq!(code, 1, "stdout: {stdout}");
    assert!(stdout.contains("campaign not certified"));
    assert!(stdout.contains("not materializable"));
    assert!(stdout.contains("# verdict = fail"));
}

#[test]
fn dieudonne_zero_stages_certify_the_sequence_ledger() {
    let (code, stdout, _) = run_cli(&["dieudonne", "--stages", "0"]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("campaign pass = true"));
    assert!(stdout.contains("# verdict = pass"));
}

const ASYM_CONFIG: &str = "motif = k2\nsizes = 500,1000\nreplications = 4\nlimit_samples = 40000\nseed = 9\n";

#[test]
fn asym_artifacts_round_trip_byte_for_byte() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("asym.cfg");
    std::fs::write(&cfg, ASYM_CONFIG).expect("write config");
    let first = dir.path().join("a1.csv");
    let out = bin()
        .args(["rgg-asym", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&first)
        .output()
        .expect("spawn");
    assert!(out.status.success());

    // The artifact header is the leading block of `# key = value` lines;
    // feeding it back as a flat config must reproduce the artifact exactly.
    let text = std::fs::read_to_string(&first).expect("read artifact");
    let mut replay = String::new();
    for line in text.lines().skip(1) {
        match line.strip_prefix("# ") {
            Some(rest) => {
                replay.push_str(rest);
                replay.push('\n');
            }
            None => break,
        }
    }
    assert!(replay.contains("seed = 9"), "header: {replay}");

    let cfg2 = dir.path().join("replay.cfg");
    std::fs::write(&cfg2, &replay).expect("write replay config");
    let second = dir.path().join("a2.csv");
    let out = bin()
        .args(["rgg-asym", "--config"])
        .arg(&cfg2)
        .arg("--out")
        .arg(&second)
        .output()
        .expect("spawn");
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&first).expect("a1"),
        std::fs::read(&second).expect("a2"),
        "replayed artifact differs"
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("asym.cfg");
    std::fs::write(&cfg, ASYM_CONFIG).expect("write config");
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let path = dir.path().join(format!("t{threads}.csv"));
        let out = bin()
            .args(["rgg-asym", "--threads", threads, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&path)
            .output()
            .expect("spawn");
        assert!(out.status.success());
        outputs.push(std::fs::read(&path).expect("read artifact"));
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the artifact");
}

#[test]
fn feasibility_finds_five_star_but_not_seven() {
    let (code, stdout, _) = run_with_config(&["feasibility"], "budget = 200000\n");
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("\"kind\": \"Found\""));

    let (code, stdout, _) =
        run_with_config(&["feasibility"], "motif = star7\nbudget = 50000\n");
    assert_eq!(code, 1, "stdout: {stdout}");
    assert!(stdout.contains("\"kind\": \"NotFound\""));
    assert!(stdout.contains("not a proof"));
    assert!(stdout.contains("\"evaluations\": 50000"));
}

#[test]
fn seed_flag_overrides_and_is_recorded() {
    let (code, stdout, _) = run_cli(&["feasibility", "--seed", "5"]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("\"seed\": \"5\""));
}

#[test]
fn walk_on_the_line_fixture_stops_at_a_local_minimum() {
    let fixture: PathBuf = [
        env!("CARGO_MANIFEST_DIR"),
        "..",
        "core",
        "tests",
        "fixtures",
        "local_minimum.txt",
    ]
    .iter()
    .collect();
    let config = format!(
        "points = {}\nradius = 1\nstart = 1\nquery = 0,0\n",
        fixture.display()
    );
    let (code, stdout, _) = run_with_config(&["rgg-walk"], &config);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("# terminal = 3"));
    assert!(stdout.contains("# is_global_nearest = false"));
}

#[test]
fn oscillation_averages_are_exact() {
    let (code, stdout, _) = run_cli(&["oscillate1d"]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("# integral_unit = 2/3"));
    assert!(stdout.contains("# normalized_symmetric = 1/3"));
    assert!(stdout.contains("# liminf = 1/6"));
    assert!(stdout.contains("# limsup = 1/3"));
}

#[test]
fn jessen_exact_tower_matches_the_closed_form() {
    let (code, stdout, _) = run_with_config(&["jessen"], "depths = 1,2,3,4,5,6,7,8,9,10\n");
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("# verdict = pass"));
}

#[test]
fn jessen_mc_intervals_cover_the_exact_values() {
    let (code, stdout, _) = run_with_config(
        &["jessen"],
        "mode = mc\nsamples = 20000\ndepths = 1,2,3,4,5\n",
    );
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("# verdict = pass"));
}

#[test]
fn sosc_presets_split_pass_and_fail() {
    let (code, stdout, _) = run_cli(&["sosc"]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("PassAt"));

    let (code, stdout, _) = run_with_config(&["sosc"], "function = limsup\n");
    assert_eq!(code, 1, "stdout: {stdout}");
    assert!(stdout.contains("FailWitness"));
}

#[test]
fn out_flag_writes_the_artifact() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("volume.json");
    let out = bin()
        .args(["volume", "--out"])
        .arg(&path)
        .output()
        .expect("spawn");
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).expect("utf8");
    assert!(stdout.contains("wrote"));
    let artifact = std::fs::read_to_string(&path).expect("artifact");
    assert!(artifact.trim_start().starts_with('{'));
    assert!(artifact.contains("\"kind\": \"Finite\""));
}
