use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pcz_core::harness::{self, OUTPUT_DIR_ENV};
use pcz_core::pcz::Snapshot;
use pcz_core::{Environment, MeanSurface, Noise, PczConfig, PczState};

fn pcz(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcz"))
        .args(args)
        .env(OUTPUT_DIR_ENV, out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_schema_versioned_csvs_to_the_override_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"env": {"kind": "appendix-d"}, "policies": ["pcz", "random"],
            "horizon": 10, "runs": 2, "output_dir": "never-used"}"#,
    );
    let out = dir.path().join("out");
    let res = pcz(&["run", &cfg], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!dir.path().join("never-used").exists());

    let trace = fs::read_to_string(out.join("runs/pcz_run001.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], harness::TRACE_SCHEMA);
    assert_eq!(lines[1], "t,x,y,ball_id,delta,cumulative_regret,child_created,front_size");
    assert_eq!(lines.len(), 12);
    let cumulative: Vec<f64> = lines[2..]
        .iter()
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert!(cumulative.windows(2).all(|w| w[1] >= w[0]));

    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with(harness::AGGREGATE_SCHEMA));
    assert!(agg.contains("t,pcz_mean,pcz_se,random_mean,random_se"));
    let fair = fs::read_to_string(out.join("fairness.csv")).unwrap();
    assert!(fair.starts_with(harness::FAIRNESS_SCHEMA));
    assert_eq!(fair.lines().count(), 4);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let unknown = write(
        dir.path(),
        "u.json",
        r#"{"env": {"kind": "appendix-d"}, "policies": ["pcz"], "colour": 1}"#,
    );
    let negative = write(
        dir.path(),
        "n.json",
        r#"{"env": {"kind": "appendix-d"}, "policies": ["pcz"], "horizon": -5}"#,
    );
    for cfg in [unknown.as_str(), negative.as_str(), "/nonexistent/config.json"] {
        let res = pcz(&["validate", cfg], &out);
        assert_eq!(res.status.code(), Some(1), "{cfg}");
    }
    let neg = pcz(&["validate", &negative], &out);
    assert!(String::from_utf8_lossy(&neg.stderr).contains("horizon"));
}

#[test]
fn validate_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"env": {"kind": "appendix-d"}, "policies": ["pcz"]}"#,
    );
    let res = pcz(&["validate", &cfg], &dir.path().join("out"));
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("T=100000"), "{stdout}");
    assert!(stdout.contains("delta=0.00001"), "{stdout}");
}

#[test]
fn oracle_dumps_fronts_for_a_table_environment() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "table.json",
        r#"{"contexts": [0.0, 1.0], "arms": [0.0, 1.0],
            "means": [[[0.2, 0.8], [0.2, 0.8]], [[0.9, 0.1], [0.9, 0.1]]]}"#,
    );
    let cfg = write(
        dir.path(),
        "t.json",
        r#"{"env": {"kind": "table", "path": "table.json"}, "policies": ["pcz"],
            "horizon": 10, "runs": 1, "arm_grid_size": 3}"#,
    );
    let out = dir.path().join("out");
    let res = pcz(&["oracle", &cfg, "--contexts", "2"], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("oracle.csv")).unwrap();
    assert!(csv.starts_with(harness::ORACLE_SCHEMA));
    // Two contexts times three arms.
    assert_eq!(csv.lines().count(), 2 + 6);
}

#[test]
fn compare_needs_two_policies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "one.json",
        r#"{"env": {"kind": "appendix-d"}, "policies": ["pcz"], "horizon": 5, "runs": 1}"#,
    );
    let res = pcz(&["compare", &cfg], &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn snapshot_round_trips_through_json() {
    let env = Environment::new(MeanSurface::AppendixD, Noise::Bernoulli).unwrap();
    let mut config = PczConfig::new(3000, 2);
    config.seed = 11;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut state = PczState::new(config).unwrap();
    for t in 0..2000 {
        let x = [(t % 97) as f64 / 96.0];
        state.step(&x, &env, &mut rng).unwrap();
    }
    let json = serde_json::to_string(&state.snapshot()).unwrap();
    let back: Snapshot = serde_json::from_str(&json).unwrap();
    let mut restored = PczState::from_snapshot(back).unwrap();
    assert_eq!(restored.snapshot(), state.snapshot());

    let mut r2 = rng.clone();
    for t in 0..500 {
        let x = [(t % 13) as f64 / 12.0];
        assert_eq!(
            state.step(&x, &env, &mut rng).unwrap(),
            restored.step(&x, &env, &mut r2).unwrap()
        );
    }
}
