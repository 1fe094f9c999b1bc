use std::process::Command;

fn percolab(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_percolab")).args(args).output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn nbrw_profile_reaches_mixing() {
    let (ok, text) = percolab(&["nbrw", "--m", "8", "--xi", "0.25", "--tmax", "30"]);
    assert!(ok);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,max_violation,mixed"));
    assert!(lines.any(|l| l.ends_with(",true")));
}

#[test]
fn percolate_is_seeded() {
    let run = |seed: &str| percolab(&["--seed", seed, "percolate", "--m", "8", "--p", "0.15", "--seeds", "2"]).1;
    assert_eq!(run("4"), run("4"));
    assert_ne!(run("4"), run("5"));
}

#[test]
fn mmspace_ghp_of_a_space_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.txt");
    std::fs::write(&path, "3\n1\n1\n1\n0\n1 0\n2 1 0\n").unwrap();
    let p = path.to_str().unwrap();
    let (ok, text) = percolab(&["mmspace", "--in", p, "--in", p, "--op", "ghp"]);
    assert!(ok);
    assert_eq!(text.lines().nth(1), Some("0.0,0.0,0.0"));
    let (ok, text) = percolab(&["mmspace", "--in", p, "--op", "gp-matrix", "--points", "3", "--samples", "4"]);
    assert!(ok);
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn multgraph_synthetic_weights() {
    let (ok, text) = percolab(&["multgraph", "--weights", "synthetic:50", "--q", "1", "--samples", "3"]);
    assert!(ok);
    let total: usize = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 150);
}

#[test]
fn bad_arguments_fail() {
    assert!(!percolab(&["experiment", "no-such-thing"]).0);
    assert!(!percolab(&["percolate", "--m", "8"]).0);
}
