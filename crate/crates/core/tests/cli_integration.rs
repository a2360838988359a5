//! Drive the `nar-astar` binary end to end on tiny data.

use std::path::Path;
use std::process::{Command, Output};

use nar_astar::sweep::SearchSpace;
use nar_astar::sweep::SweepResult;

const CONFIG: &str = r#"
version = 1
seed = 3

[data]
families = ["dense", "sparse"]
sizes = [8, 12]
train_count = 12
validation_count = 4
test_count = 6

[model]
hidden_dim = 4
mlp_hidden = 4

[train]
max_epochs = 1
"#;

fn nar_astar(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_nar-astar"))
        .current_dir(dir)
        .env_remove("NAR_ASTAR_DATA_DIR")
        .env("RUST_LOG", "warn")
        .args(["--config", "run.toml"])
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn generate_data_is_byte_identical() {
    let dir = setup();
    nar_astar(dir.path(), &["--data-dir", "a", "generate-data"]);
    nar_astar(dir.path(), &["--data-dir", "b", "generate-data"]);
    let (a, b) = (files(&dir.path().join("a")), files(&dir.path().join("b")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert!(
        names.contains(&"train.nards") && names.contains(&"test-sparse-12.nards"),
        "{names:?}"
    );
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        if na.ends_with(".nards") {
            assert_eq!(ba, bb, "{na} differs");
        }
    }
}

#[test]
fn zero_heuristic_is_exact() {
    let dir = setup();
    nar_astar(dir.path(), &["generate-data"]);
    let out = nar_astar(
        dir.path(),
        &[
            "--out",
            "ev",
            "evaluate",
            "--heuristic",
            "zero",
            "--trials",
            "2",
            "--timing-reps",
            "1",
        ],
    );
    let table = std::fs::read_to_string(dir.path().join("ev/table.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row[col("source")], "zero");
        assert_eq!(row[col("path_accuracy")].parse::<f64>().unwrap(), 1.0);
        assert_eq!(
            row[col("relative_distance_mean")].parse::<f64>().unwrap(),
            0.0
        );
        assert_eq!(row[col("constraints_mean")].parse::<f64>().unwrap(), 1.0);
    }
    // The report subcommand re-emits the same table from the JSON.
    nar_astar(
        dir.path(),
        &[
            "--out",
            "again",
            "report",
            "--input",
            "ev/report.json",
            "--format",
            "csv",
        ],
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("again/table.csv")).unwrap(),
        table
    );
}

#[test]
fn level_one_sweep_stays_in_range() {
    let dir = setup();
    nar_astar(dir.path(), &["generate-data"]);
    nar_astar(
        dir.path(),
        &[
            "--out", "sw", "sweep", "--level", "1", "--budget", "5", "--epochs", "1",
        ],
    );
    let log = std::fs::read_to_string(dir.path().join("sw/sweep.jsonl")).unwrap();
    let results: Vec<SweepResult> = log
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert_eq!(v["kind"], "trial");
            v.as_object_mut().unwrap().remove("kind");
            serde_json::from_value(v).unwrap()
        })
        .collect();
    assert_eq!(results.len(), 5);
    for r in &results {
        assert!(SearchSpace::LEVEL_1.contains(&r.config), "{:?}", r.config);
    }
    for w in results.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
    assert!(dir.path().join("sw/resolved_config.toml").exists());
}

#[test]
fn bad_arguments_and_missing_data_have_distinct_exit_codes() {
    let dir = setup();
    let code = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_nar-astar"))
            .current_dir(dir.path())
            .env_remove("NAR_ASTAR_DATA_DIR")
            .args(args)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(
        code(&["--config", "run.toml", "sweep", "--level", "7"]),
        Some(2)
    );
    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(
        code(&["--config", "run.toml", "--data-dir", "nowhere", "train"]),
        Some(3)
    );
}
