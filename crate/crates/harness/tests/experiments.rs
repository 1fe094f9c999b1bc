use percolab::config::ExperimentConfig;
use percolab::experiments::{run, run_experiment};

fn small(name: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "experiment = {name}\nm = 10\nseeds = 8\nkappa_samples = 50\nbudget = 1000\nn_perm = 100\nreps = 1\nn_pairs = 10"
    ))
    .unwrap()
}

#[test]
fn noop_with_zero_seeds_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::parse("experiment = noop\nseeds = 0").unwrap();
    c.out_dir = dir.path().to_path_buf();
    run_experiment(&c).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "timing.json"]);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], c.hash());
    assert_eq!(manifest["seeds"], 0);
    assert!(manifest.get("wall_seconds").is_none());
}

#[test]
fn sizes_vs_er_emits_both_sides_and_a_report() {
    let c = small("sizes-vs-er");
    let out = run(&c).unwrap();
    let t = out.table("sizes").unwrap();
    assert_eq!(t.rows.len(), 16);
    assert_eq!(t.header.len(), 4 + 5);
    let side = t.column("side").unwrap();
    assert_eq!(t.rows.iter().filter(|r| r[side] == "er").count(), 8);
    let (_, r) = &out.reports[0];
    assert!((0.0..=1.0).contains(&r.p_value));
    assert_eq!(r.n_perm, 100);
}

#[test]
fn unknown_experiment_is_an_error() {
    assert!(run(&small("no-such-thing")).is_err());
}

#[test]
fn window_width_needs_two_lambdas() {
    let mut c = small("window-width");
    c.lambda = vec![0.0];
    assert!(run(&c).is_err());
}

#[test]
fn seed_changes_output() {
    let a = run(&small("sizes-vs-brownian")).unwrap();
    let mut c = small("sizes-vs-brownian");
    c.seed = 2;
    let b = run(&c).unwrap();
    assert_ne!(a.table("sizes").unwrap().rows, b.table("sizes").unwrap().rows);
}
