use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn vacle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vacle"))
        .current_dir(dir)
        .env("VACLE_CACHE_DIR", dir.join("cache"))
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_lines(o: &Output) -> Vec<Value> {
    stdout(o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad JSON line {l:?}: {e}")))
        .collect()
}

const SMALL: &str = r#"
[model]
id = "small"
kind = "spiked_population"
spikes = [9.0, 6.0, 4.0]

[[estimator]]
method = "vacle"

[[estimator]]
method = "tvacle"

[[estimator]]
method = "py"

[calibration]
reps = 40

[harness]
reps = 12
seed = 3
grid = [{ p = 40, n = 80 }, { p = 60, n = 60 }]
"#;

fn write_spectrum(dir: &Path) -> std::path::PathBuf {
    // Three clear spikes over a flat bulk near the edge.
    let mut values = vec![12.0, 8.0, 6.0];
    values.extend((0..37).map(|i| 2.9 - 0.05 * i as f64));
    let path = dir.join("eig.txt");
    let text: String = std::iter::once("# eigenvalues\n".to_string())
        .chain(values.iter().map(|v| format!("{v}\n")))
        .collect();
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn limits_json_mode_prints_one_object_per_line() {
    let dir = TempDir::new().unwrap();
    let o = vacle(dir.path(), &["--json", "limits", "--family", "autocov", "--y", "0.5", "--theta", "0.6,-0.5,0.3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = json_lines(&o);
    assert!(!lines.is_empty());
    let text = stdout(&o);
    assert!(text.contains("2.77"), "{text}");
}

#[test]
fn calibrate_hits_the_cache_the_second_time() {
    let dir = TempDir::new().unwrap();
    let args = ["--json", "calibrate", "--kind", "population", "--p", "30", "--n", "60", "--reps", "20", "--seed", "7"];
    let first = vacle(dir.path(), &args);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = vacle(dir.path(), &args);
    let (a, b) = (&json_lines(&first)[0], &json_lines(&second)[0]);
    assert_eq!(a["cache_hit"], false);
    assert_eq!(b["cache_hit"], true);
    assert_eq!(a["schema"], 1);
    assert_eq!(a["ridges"], b["ridges"]);
    assert!(dir.path().join("cache").read_dir().unwrap().count() == 1);
}

#[test]
fn calibrate_accepts_series_length_for_autocov() {
    let dir = TempDir::new().unwrap();
    let o = vacle(dir.path(), &["--json", "calibrate", "--kind", "autocov", "--p", "20", "--T", "40", "--reps", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json_lines(&o)[0]["n"], 40);
}

#[test]
fn single_replication_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let o = vacle(dir.path(), &["--json", "calibrate", "--kind", "population", "--p", "30", "--n", "60", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = &json_lines(&o)[0];
    assert_eq!(err["exit_code"], 2);
    assert!(err["error"].as_str().unwrap().contains("R >= 2"));
}

#[test]
fn estimate_writes_trace_and_plot_data() {
    let dir = TempDir::new().unwrap();
    let input = write_spectrum(dir.path());
    let o = vacle(
        dir.path(),
        &[
            "--json", "estimate", "--input", input.to_str().unwrap(), "--family", "population",
            "--method", "vacle", "--n", "80", "--c-n", "0.1", "--trace", "trace.json",
            "--plot-data", "plot.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json_lines(&o)[0]["q_hat"], 3);
    let trace: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    for key in ["deltas", "ratios", "tau", "c_n", "q_hat"] {
        assert!(trace.get(key).is_some(), "missing {key}");
    }
    assert_eq!(trace["ratios"].as_array().unwrap().len(), 18);
    let plot = fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    assert!(plot.starts_with("i,ratio,tau\n1,"));
    assert_eq!(plot.lines().count(), 19);
}

#[test]
fn estimate_rejects_search_bound_past_p() {
    let dir = TempDir::new().unwrap();
    let input = write_spectrum(dir.path());
    let o = vacle(
        dir.path(),
        &["estimate", "--input", input.to_str().unwrap(), "--family", "population", "--method", "tvacle", "--n", "80", "--L", "41"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("L + 1 exceeds p"), "{}", stderr(&o));
}

#[test]
fn bad_input_lines_are_named() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "5.0\n3.0\nabc\n1.0\n").unwrap();
    let o = vacle(dir.path(), &["estimate", "--input", "bad.txt", "--family", "population", "--method", "py", "--n", "50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.txt:3:"), "{}", stderr(&o));
    let missing = vacle(dir.path(), &["estimate", "--input", "nope.txt", "--family", "population", "--method", "py", "--n", "50"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_exit_2() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("exp.toml"), SMALL.replace("reps = 12", "reps = 12\nrepz = 1")).unwrap();
    let o = vacle(dir.path(), &["simulate", "--config", "exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("repz"));
}

#[test]
fn ill_conditioned_noise_is_exit_3() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[model]
id = "singular"
kind = "spiked_fisher"
alpha = [10.0]
noise = { type = "split", low = 1e-14, high = 1.0 }

[[estimator]]
method = "wy"

[harness]
reps = 3
grid = [{ p = 20, n = 60, T = 40 }]
"#;
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    let o = vacle(dir.path(), &["--json", "simulate", "--config", "exp.toml", "--csv", "out.csv"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(json_lines(&o).last().unwrap()["exit_code"], 3);
}

#[test]
fn simulate_is_reproducible_and_report_round_trips() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("exp.toml"), SMALL).unwrap();
    let a = vacle(dir.path(), &["simulate", "--config", "exp.toml", "--csv", "a.csv", "--json-out", "a.json"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = vacle(dir.path(), &["--sequential", "simulate", "--config", "exp.toml", "--csv", "b.csv"]);
    assert!(b.status.success(), "{}", stderr(&b));
    let csv_a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv_a, fs::read_to_string(dir.path().join("b.csv")).unwrap());

    let header = csv_a.lines().next().unwrap();
    let mut expected = vec!["model_id", "p", "n", "T", "estimator", "R", "mean", "mse", "misest_rate"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    expected.extend((0..20).map(|i| format!("d{i}")));
    expected.extend(["d_ge_20", "seed", "runtime_s"].map(String::from));
    assert_eq!(header, expected.join(","));
    assert_eq!(csv_a.lines().count(), 1 + 2 * 3);
    // runtime_s stays blank without --timing, so reruns are byte-identical.
    assert!(csv_a.lines().skip(1).all(|l| l.ends_with(",3,")));

    let r = vacle(dir.path(), &["report", "--input", "a.json", "--output", "c.csv"]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(csv_a, fs::read_to_string(dir.path().join("c.csv")).unwrap());
}
