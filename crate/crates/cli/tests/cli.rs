use std::path::PathBuf;
use std::process::{Command, Output};

fn mmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmimo"))
        .args(args)
        .env_remove("MMIMO_WORKERS")
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mmimo-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn lists_six_recipes() {
    let out = mmimo(&["list-recipes"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("fdd-ns-sweep"));
}

#[test]
fn recipe_writes_csv_and_json() {
    let csv = scratch("ot.csv");
    let json = scratch("ot.json");
    let out = mmimo(&[
        "recipe",
        "outage-training",
        "--trials",
        "300",
        "--set",
        "sweep.training=[1, 2]",
        "--out",
        csv.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("# trials: 300\n"));
    assert!(text.contains("\nt,scheme,p_outage,ci_lo,ci_hi\n"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(doc["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn output_does_not_depend_on_workers() {
    let args = |w: &'static str| ["recipe", "tdm-vs-sdm", "--trials", "300", "--set", "sweep.lengths=[16, 20]", "--workers", w];
    let a = mmimo(&args("1"));
    let b = mmimo(&args("3"));
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn run_and_validate_a_config_file() {
    let path = scratch("cfg.toml");
    std::fs::write(&path, "experiment = \"coded-ra\"\ntrials = 100\n[coded]\nslots = [2]\n").unwrap();
    let out = mmimo(&["validate", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("ok coded-ra "));
    let out = mmimo(&["run", path.to_str().unwrap(), "--seed", "4"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("# seed: 4\n"));
}

#[test]
fn validation_errors_exit_with_2() {
    assert_eq!(mmimo(&["recipe", "outage-training", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(mmimo(&["recipe", "no-such-recipe"]).status.code(), Some(2));
    assert_eq!(mmimo(&["recipe", "ra-crowded", "--set", "ra.bogus=1"]).status.code(), Some(2));
    let out = mmimo(&["recipe", "outage-training", "--set", "sweep.training=[40]"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("sweep.training"));
    let path = scratch("bad.toml");
    std::fs::write(&path, "experiment = \"ra-crowded\"\n[population]\npilots = 0\n").unwrap();
    assert_eq!(mmimo(&["validate", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mmimo(&["run", "/nonexistent/cfg.toml"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let out = mmimo(&["recipe", "ra-crowded", "--set", "ra.blocks=40", "--set", "ra.batches=4", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(out.status.code(), Some(3));
}
