use std::path::Path;
use std::process::{Command, Output};

fn hardball(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardball")).args(args).output().expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_manifest_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "sim.spec", "# two touching balls\nn_balls = 3\nspacing = 1.0\nlevel = 6\n");
    let out = dir.path().join("out");
    let o = hardball(&["simulate", "--spec", &spec, "--out", &path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "trajectory.csv", "ledger.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "bad.spec", "level = 6\nwobble = 3\n");
    let o = hardball(&["simulate", "--spec", &spec, "--out", &path_str(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("wobble") && err.contains("line 2"), "{err}");
}

#[test]
fn repeated_runs_are_byte_identical_and_manifest_replays() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "lj.spec",
        "potential = lennard_jones\ncutoff = 2.5\nn_balls = 5\nspacing = 1.05\nlevel = 7\n",
    );
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let o = hardball(&["simulate", "--spec", &spec, "--out", &path_str(out), "--seed", "42"]);
        assert_eq!(o.status.code(), Some(0));
    }
    let manifest = path_str(&a.join("manifest.json"));
    assert_eq!(hardball(&["simulate", "--spec", &manifest, "--out", &path_str(&c)]).status.code(), Some(0));
    for f in ["trajectory.csv", "ledger.csv", "summary.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(x, std::fs::read(c.join(f)).unwrap(), "{f} from manifest");
    }
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.spec", "level = 5\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    hardball(&["simulate", "--spec", &spec, "--out", &path_str(&a), "--seed", "1"]);
    hardball(&["simulate", "--spec", &spec, "--out", &path_str(&b), "--seed", "2"]);
    assert_ne!(std::fs::read(a.join("trajectory.csv")).unwrap(), std::fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn cluster_sim_writes_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "c.spec",
        "n_balls = 6\nspacing = 4\npotential = lennard_jones\ncutoff = 1.25\neps = 0.5\nlevel = 6\n",
    );
    let out = dir.path().join("o");
    let o = hardball(&["cluster-sim", "--spec", &spec, "--out", &path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let parts = std::fs::read_to_string(out.join("partitions.json")).unwrap();
    assert!(parts.contains("initial_groups"));
}

#[test]
fn gibbs_and_reversibility_commands() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_spec(dir.path(), "g.spec", "n_balls = 10\npacking_fraction = 0.2\nsweeps = 20\n");
    let out = dir.path().join("g");
    assert_eq!(hardball(&["gibbs-sample", "--spec", &g, "--out", &path_str(&out)]).status.code(), Some(0));
    assert!(out.join("config.txt").exists());

    let r = write_spec(
        dir.path(),
        "r.spec",
        "n_balls = 8\npacking_fraction = 0.2\nsweeps = 20\nreplicas = 4\nlevel = 5\nhorizon = 0.25\n",
    );
    let out = dir.path().join("r");
    assert_eq!(hardball(&["reversibility", "--spec", &r, "--out", &path_str(&out)]).status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("histograms.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn diagnostics_with_config_file_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("start.txt"), "2 1 2 free\n0 0\n1.5 0\n").unwrap();
    let spec = write_spec(
        dir.path(),
        "d.spec",
        "config = start.txt\nlevel = 6\nfree = harmonic\nstiffness = 2\nfcp_eps = 0.2\nfcp_a = 3\n",
    );
    let out = dir.path().join("o");
    let o = hardball(&["diagnostics", "--spec", &spec, "--out", &path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("witness.json").exists());
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let overlap = write_spec(dir.path(), "o.spec", "spacing = 0.5\nlevel = 4\n");
    let o = hardball(&["simulate", "--spec", &overlap, "--out", &path_str(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = hardball(&["simulate", "--spec", &path_str(&dir.path().join("missing.spec"))]);
    assert_eq!(o.status.code(), Some(1));
    let o = hardball(&["teleport", "--spec", &overlap]);
    assert_eq!(o.status.code(), Some(1));
    let mismatch = write_spec(dir.path(), "m.spec", "command = gibbs-sample\n");
    let o = hardball(&["simulate", "--spec", &mismatch, "--out", &path_str(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two_without_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "x.spec", "n_balls = 6\nspacing = 1.0\nlevel = 4\nmax_iter = 1\n");
    let out = dir.path().join("o");
    let o = hardball(&["simulate", "--spec", &spec, "--out", &path_str(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("trajectory.csv").exists());
}
