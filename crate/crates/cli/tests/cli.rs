use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use shrinkmeta::AnalysisReport;

const SMALL: &str = "label,y,se,target\na,0.3,0.4,0\nb,1.1,0.2,0\nc,-0.5,0.7,1\n";

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("shrinkmeta").chain(args.iter().copied());
    let code = shrinkmeta_cli::run(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn write_small(dir: &Path, name: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn analyze_writes_report_and_forest() {
    let dir = tempfile::tempdir().unwrap();
    let mv = data_file("mechanical_ventilation.csv");
    let report = dir.path().join("report.json");
    let svg = dir.path().join("mv.svg");
    let r = run(&[
        "analyze",
        "--input",
        mv.to_str().unwrap(),
        "--tau-prior",
        "half-normal:1.0",
        "--level",
        "0.95",
        "--interval",
        "shortest",
        "--out",
        report.to_str().unwrap(),
        "--forest",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.is_empty());
    let parsed: AnalysisReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.schema_version, 1);
    assert!((parsed.mu.mean - 2.215).abs() < 0.05);
    let doc = fs::read_to_string(&svg).unwrap();
    assert!(doc.contains("<svg") && doc.trim_end().ends_with("</svg>"));
    // No temporary files are left behind.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn report_goes_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_small(dir.path(), "s.csv");
    let r = run(&["analyze", "--input", &input]);
    assert_eq!(r.code, 0);
    let parsed: AnalysisReport = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(parsed.studies.len(), 3);
}

#[test]
fn missing_input_names_the_path() {
    let r = run(&["analyze", "--input", "missing.csv"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("missing.csv"), "{}", r.stderr);
    assert!(r.stdout.is_empty());
}

#[test]
fn unknown_flag_prints_usage() {
    let r = run(&["analyze", "--input", "x.csv", "--frobnicate"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("Usage"), "{}", r.stderr);
    let r = run(&["transmogrify"]);
    assert_eq!(r.code, 1);
}

#[test]
fn help_and_version_succeed() {
    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    for sub in ["analyze", "simulate", "oracle-check"] {
        assert!(r.stdout.contains(sub));
    }
    assert_eq!(run(&["--version"]).code, 0);
}

#[test]
fn bad_flag_values_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_small(dir.path(), "s.csv");
    for args in [
        vec!["--tau-prior", "half-normal:-1"],
        vec!["--tau-prior", "lognormal:1"],
        vec!["--mu-prior", "normal:0"],
        vec!["--level", "1.5"],
        vec!["--interval", "widest"],
        vec!["--tau-estimate", "max"],
        vec!["--tol", "0"],
        vec!["--target", "nobody"],
    ] {
        let mut all = vec!["analyze", "--input", input.as_str()];
        all.extend(args.iter().copied());
        let r = run(&all);
        assert_eq!(r.code, 1, "{args:?}: {}", r.stderr);
        assert!(!r.stderr.is_empty());
    }
}

#[test]
fn impossible_tolerance_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_small(dir.path(), "s.csv");
    let r = run(&["analyze", "--input", &input, "--tol", "1e-14"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("tol"));
}

#[test]
fn forest_format_follows_extension() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_small(dir.path(), "s.csv");
    let json = dir.path().join("r.json");
    let json = json.to_str().unwrap();
    let txt = dir.path().join("plot.txt");
    let r = run(&[
        "analyze",
        "--input",
        &input,
        "--out",
        json,
        "--forest",
        txt.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = fs::read_to_string(&txt).unwrap();
    assert!(text.lines().all(|l| l.chars().count() == 100));

    let odd = dir.path().join("plot.png");
    let r = run(&["analyze", "--input", &input, "--forest", odd.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(!odd.exists());

    let r = run(&[
        "analyze",
        "--input",
        &input,
        "--out",
        json,
        "--forest",
        odd.to_str().unwrap(),
        "--forest-format",
        "svg",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(fs::read_to_string(&odd).unwrap().contains("<svg"));
}

#[test]
fn several_inputs_match_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["smoking.csv", "obesity.csv", "vasopressors.csv"];
    let inputs: Vec<String> = names
        .iter()
        .map(|n| data_file(n).to_str().unwrap().to_owned())
        .collect();
    let out = dir.path().join("reports");
    let plots = dir.path().join("plots");
    let mut args = vec!["analyze"];
    for i in &inputs {
        args.extend(["--input", i.as_str()]);
    }
    args.extend([
        "--out",
        out.to_str().unwrap(),
        "--forest",
        plots.to_str().unwrap(),
    ]);
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for (name, input) in names.iter().zip(&inputs) {
        let stem = name.trim_end_matches(".csv");
        let single = run(&["analyze", "--input", input]);
        assert_eq!(
            fs::read_to_string(out.join(format!("{stem}.json"))).unwrap(),
            single.stdout
        );
        assert!(plots.join(format!("{stem}.svg")).exists());
    }
}

#[test]
fn several_inputs_need_an_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_small(dir.path(), "a.csv");
    let b = write_small(dir.path(), "b.csv");
    assert_eq!(run(&["analyze", "--input", &a, "--input", &b]).code, 1);

    let sub = dir.path().join("sub");
    fs::create_dir(&sub).unwrap();
    let a2 = write_small(&sub, "a.csv");
    let out = dir.path().join("out");
    let r = run(&[
        "analyze",
        "--input",
        &a,
        "--input",
        &a2,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("share the name"));
}

#[test]
fn one_bad_input_among_several_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_small(dir.path(), "good.csv");
    let out = dir.path().join("out");
    let r = run(&[
        "analyze",
        "--input",
        &good,
        "--input",
        "absent.csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("absent.csv"));
    assert!(out.join("good.json").exists());
}

#[test]
fn simulate_emits_coverage_json() {
    let r = run(&[
        "simulate", "--k", "5", "--mu", "0", "--tau", "0.5", "--sigma", "0.3", "--reps", "20", "--seed", "42",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    for key in ["mu", "theta_target", "theta_new"] {
        let c = v[key]["coverage"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&c));
        assert_eq!(v[key]["replications"], 20);
    }
    assert_eq!(v["config"]["seed"], 42);

    let again = run(&[
        "simulate", "--k", "5", "--mu", "0", "--tau", "0.5", "--sigma", "0.3", "--reps", "20", "--seed", "42",
    ]);
    assert_eq!(again.stdout, r.stdout);
}

#[test]
fn simulate_sigma_forms() {
    let ok = run(&[
        "simulate",
        "--k",
        "3",
        "--mu",
        "-1",
        "--tau",
        "0.2",
        "--sigma",
        "0.2,0.3,0.4",
        "--reps",
        "3",
    ]);
    assert_eq!(ok.code, 0, "{}", ok.stderr);
    let ok = run(&[
        "simulate",
        "--k",
        "3",
        "--mu",
        "0",
        "--tau",
        "0.2",
        "--sigma-range",
        "0.1,1",
        "--reps",
        "3",
    ]);
    assert_eq!(ok.code, 0, "{}", ok.stderr);
    let bad = run(&[
        "simulate", "--k", "3", "--mu", "0", "--tau", "0.2", "--sigma", "0.2,0.3", "--reps", "3",
    ]);
    assert_eq!(bad.code, 1);
    let both = run(&[
        "simulate",
        "--k",
        "3",
        "--mu",
        "0",
        "--tau",
        "0.2",
        "--sigma",
        "0.2",
        "--sigma-range",
        "0.1,1",
    ]);
    assert_eq!(both.code, 1);
}

#[test]
fn oracle_check_thresholds_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_small(dir.path(), "s.csv");
    let r = run(&[
        "oracle-check",
        "--input",
        &input,
        "--resolution",
        "20000",
        "--probes",
        "200",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    assert!(v["mu_cdf_sup"].as_f64().unwrap() < 1e-4);

    let r = run(&[
        "oracle-check",
        "--input",
        &input,
        "--resolution",
        "10000",
        "--probes",
        "200",
        "--max-cdf-distance",
        "1e-15",
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("exceeds"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_shrinkmeta");
    let out = Command::new(bin)
        .args(["analyze", "--input", "missing.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    let out = Command::new(bin).arg("--nope").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
