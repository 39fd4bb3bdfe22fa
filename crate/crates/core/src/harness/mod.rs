//! Experiment orchestration: resolves a spec, runs the named experiment and
//! writes its artifacts.
//!
//! Exit status: 0 on success, 1 on an input error, 2 on an invariant
//! violation. Outputs never contain timestamps, so identical specs produce
//! identical files.

mod spec;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use spec::{Command, ExperimentSpec};

use crate::cluster::{default_window_count, localized_simulate, LocalizeOptions};
use crate::diagnostics::{diagnostics_nbj, path_modulus, trajectory_modulus};
use crate::error::{Error, Result};
use crate::fcp::{fcp_certificate, verify_witness, FcpOutcome};
use crate::geometry::{BallConfiguration, Boundary, DEFAULT_TOL_CONTACT, DEFAULT_TOL_HC};
use crate::gibbs::{box_side_for_packing, gibbs_chain, reversibility_test, GibbsSamplerConfig, ReplicaStart};
use crate::integrator::{refinement_study, simulate_ske_n_with, uniqueness_probe, SimulationOptions};
use crate::io::{format_config, read_config, write_histograms_csv, write_json, write_ledger_csv, write_trajectory_csv};
use crate::noise::DyadicBrownianPath;
use crate::potentials::{FreePotential, PairPotential, Potentials};
use crate::skorohod::{ProjectionSettings, ReflectionLedger};
use crate::trajectory::Trajectory;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub message: String,
    pub outputs: Vec<PathBuf>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
enum Failure {
    Input(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { .. } | Error::Convergence { .. } => Failure::Invariant(e.to_string()),
            Error::Input(m) => Failure::Input(m),
            other => Failure::Input(other.to_string()),
        }
    }
}

type Step<T> = std::result::Result<T, Failure>;

/// Reads a spec file (or a manifest written by a previous run) and applies the seed override.
pub fn load_spec(path: &Path, command: Option<Command>, seed: Option<u64>) -> Result<ExperimentSpec> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read spec {}: {e}", path.display())))?;
    let mut spec = if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(&text)?;
        let resolved = v
            .get("spec_text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Input("manifest has no `spec_text`".into()))?;
        ExperimentSpec::parse(resolved, command, None)?
    } else {
        ExperimentSpec::parse(&text, command, path.parent())?
    };
    if let Some(s) = seed {
        spec.set("seed", s)?;
    }
    Ok(spec)
}

/// Runs the experiment and writes every artifact into `out_dir`.
pub fn run(spec: &ExperimentSpec, out_dir: &Path) -> RunOutcome {
    let mut outputs = Vec::new();
    let result = std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", out_dir.display())))
        .and_then(|_| {
            write_manifest(spec, out_dir, &mut outputs)?;
            dispatch(spec, out_dir, &mut outputs)
        });
    match result {
        Ok(msg) => RunOutcome { exit_code: EXIT_OK, message: msg, outputs },
        Err(Failure::Input(m)) => RunOutcome { exit_code: EXIT_INPUT, message: format!("input error: {m}"), outputs },
        Err(Failure::Invariant(m)) => {
            RunOutcome { exit_code: EXIT_INVARIANT, message: format!("invariant violation: {m}"), outputs }
        }
    }
}

fn dispatch(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<String> {
    match spec.command {
        Command::Simulate => run_simulate(spec, out, outputs),
        Command::RefineStudy => run_refine(spec, out, outputs),
        Command::UniquenessProbe => run_probe(spec, out, outputs),
        Command::ClusterSim => run_cluster(spec, out, outputs),
        Command::GibbsSample => run_gibbs(spec, out, outputs),
        Command::Reversibility => run_reversibility(spec, out, outputs),
        Command::Diagnostics => run_diagnostics(spec, out, outputs),
    }
}

fn write_manifest(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<()> {
    let manifest = json!({
        "program": "hardball",
        "version": env!("CARGO_PKG_VERSION"),
        "command": spec.command.name(),
        "seed": spec.raw("seed")?,
        "spec": spec.params,
        "spec_text": spec.to_text(),
    });
    save_json(out, "manifest.json", &manifest, outputs)
}

fn save_json<T: serde::Serialize>(out: &Path, name: &str, v: &T, outputs: &mut Vec<PathBuf>) -> Step<()> {
    let p = out.join(name);
    write_json(&p, v)?;
    outputs.push(p);
    Ok(())
}

fn create(out: &Path, name: &str, outputs: &mut Vec<PathBuf>) -> Step<BufWriter<File>> {
    let p = out.join(name);
    let f = File::create(&p).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display())))?;
    outputs.push(p);
    Ok(BufWriter::new(f))
}

fn boundary(spec: &ExperimentSpec) -> Step<Boundary> {
    Ok(match spec.raw("box")? {
        "free" => Boundary::Free,
        _ => Boundary::Periodic(spec.get("box")?),
    })
}

pub fn potentials(spec: &ExperimentSpec) -> Result<Potentials> {
    let beta: f64 = spec.get("beta")?;
    let cutoff: Option<f64> = spec.get_opt("cutoff")?;
    let pair = match spec.raw("potential")? {
        "hard_core" => PairPotential::hard_core_only(),
        "lennard_jones" => PairPotential::lennard_jones(beta, cutoff)?,
        "riesz" => PairPotential::riesz(spec.get("riesz_a")?, beta, cutoff)?,
        other => return Err(Error::Input(format!("key `potential`: unknown profile `{other}`"))),
    };
    let free = match spec.raw("free")? {
        "zero" => FreePotential::Zero,
        "harmonic" => FreePotential::Harmonic { stiffness: spec.get("stiffness")? },
        other => return Err(Error::Input(format!("key `free`: unknown field `{other}`"))),
    };
    Ok(Potentials::new(pair, free))
}

fn sim_options(spec: &ExperimentSpec) -> Step<SimulationOptions> {
    Ok(SimulationOptions {
        projection: ProjectionSettings {
            tol_proj: spec.get("tol_proj")?,
            max_iter: spec.get("max_iter")?,
            ..ProjectionSettings::default()
        },
        ..SimulationOptions::default()
    })
}

/// Initial configuration from `config`, or generated by `init`.
pub fn initial_config(spec: &ExperimentSpec) -> Result<BallConfiguration> {
    if let Some(p) = spec.config_path()? {
        return read_config(&p).map_err(|e| match e {
            Error::Input(m) => Error::Input(format!("config {}: {m}", p.display())),
            other => Error::Input(format!("config {}: {other}", p.display())),
        });
    }
    let dim: usize = spec.get("dim")?;
    let r: f64 = spec.get("radius")?;
    let n: usize = spec.get("n_balls")?;
    let spacing: f64 = spec.get("spacing")?;
    let bnd = match spec.raw("box")? {
        "free" => Boundary::Free,
        _ => Boundary::Periodic(spec.get("box")?),
    };
    if dim == 0 {
        return Err(Error::Input("key `dim`: must be positive".into()));
    }
    let per_side = match spec.raw("init")? {
        "line" => n.max(1),
        "lattice" => {
            let mut m = (n as f64).powf(1.0 / dim as f64).round().max(1.0) as usize;
            while m.pow(dim as u32) < n {
                m += 1;
            }
            m
        }
        other => return Err(Error::Input(format!("key `init`: unknown layout `{other}`"))),
    };
    let mut pos = Vec::with_capacity(n * dim);
    for i in 0..n {
        let mut rest = i;
        for _ in 0..dim {
            pos.push((rest % per_side) as f64 * spacing);
            rest /= per_side;
        }
    }
    BallConfiguration::new(dim, r, pos, bnd)
}

fn sample_path(spec: &ExperimentSpec, config: &BallConfiguration, level: u32) -> Result<DyadicBrownianPath> {
    DyadicBrownianPath::sample(spec.get("seed")?, level, spec.get("horizon")?, config.n_balls(), config.dim())
}

#[derive(Default)]
struct InvariantMaxima {
    min_pair_distance: f64,
    max_overlap: f64,
    max_support_gap: f64,
    first_violation: Option<String>,
}

/// Hard-core check on every frame and contact check on every positive increment.
fn check_invariants(traj: &Trajectory, ledger: &ReflectionLedger) -> InvariantMaxima {
    let r = traj.radius();
    let mut m = InvariantMaxima { min_pair_distance: f64::INFINITY, ..Default::default() };
    let bnd = traj.boundary();
    for k in 0..traj.n_frames() {
        for j in 0..traj.n_balls() {
            for i in j + 1..traj.n_balls() {
                let d = bnd.distance(traj.position(k, j), traj.position(k, i));
                m.min_pair_distance = m.min_pair_distance.min(d);
                m.max_overlap = m.max_overlap.max(r - d);
                if d < r - DEFAULT_TOL_HC * r && m.first_violation.is_none() {
                    m.first_violation = Some(format!("frame {k}: balls {j} and {i} at distance {d} < {r}"));
                }
            }
        }
    }
    for (s, step) in ledger.steps().iter().enumerate() {
        for p in &step.pairs {
            let d = bnd.distance(traj.position(s + 1, p.j), traj.position(s + 1, p.k));
            let gap = d / r - 1.0;
            m.max_support_gap = m.max_support_gap.max(gap);
            if gap > DEFAULT_TOL_CONTACT && m.first_violation.is_none() {
                m.first_violation =
                    Some(format!("step {}: local time of ({}, {}) grows at distance {d}", s + 1, p.j, p.k));
            }
        }
    }
    m
}

/// Validates, then writes trajectory and ledger. Returns the invariant summary.
fn emit_run(
    out: &Path,
    traj: &Trajectory,
    ledger: &ReflectionLedger,
    h: f64,
    outputs: &mut Vec<PathBuf>,
) -> Step<Value> {
    let inv = check_invariants(traj, ledger);
    if let Some(v) = inv.first_violation {
        return Err(Failure::Invariant(v));
    }
    write_trajectory_csv(traj, create(out, "trajectory.csv", outputs)?)?;
    write_ledger_csv(ledger, h, create(out, "ledger.csv", outputs)?)?;
    let max_sweeps = ledger.steps().iter().map(|s| s.sweeps).max().unwrap_or(0);
    let contact_steps = ledger.steps().iter().filter(|s| !s.pairs.is_empty()).count();
    Ok(json!({
        "n_balls": traj.n_balls(),
        "frames": traj.n_frames(),
        "min_pair_distance": finite_or_null(inv.min_pair_distance),
        "max_overlap": inv.max_overlap.max(0.0),
        "max_support_gap": inv.max_support_gap,
        "max_sweeps": max_sweeps,
        "contact_steps": contact_steps,
        "total_variation": ledger.total_variation(),
    }))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// `|sum_j (X_T^j - X_0^j - B_T^j)|`
fn momentum_residual(traj: &Trajectory, path: &DyadicBrownianPath) -> f64 {
    let d = traj.dim();
    let last = traj.n_frames() - 1;
    let mut acc = vec![0.0; d];
    for j in 0..traj.n_balls() {
        let (x1, x0, b) = (traj.position(last, j), traj.position(0, j), path.value(last, j));
        for a in 0..d {
            acc[a] += x1[a] - x0[a] - b[a];
        }
    }
    acc.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn run_simulate(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<String> {
    let x0 = initial_config(spec)?;
    let pots = potentials(spec)?;
    let path = sample_path(spec, &x0, spec.get("level")?)?;
    let sim = simulate_ske_n_with(&x0, &pots, &path, &sim_options(spec)?)?;
    let mut summary = emit_run(out, &sim.trajectory, &sim.ledger, path.step(), outputs)?;
    summary["steps"] = json!(path.n_steps());
    if pots.free.is_zero() {
        summary["momentum_residual"] = json!(momentum_residual(&sim.trajectory, &path));
    }
    save_json(out, "summary.json", &summary, outputs)?;
    Ok(format!("simulated {} balls over {} steps", x0.n_balls(), path.n_steps()))
}

fn run_refine(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<String> {
    let x0 = initial_config(spec)?;
    let pots = potentials(spec)?;
    let lo: u32 = spec.get("level_min")?;
    let hi: u32 = spec.get("level_max")?;
    if lo >= hi {
        return Err(Failure::Input("`level_min` must be below `level_max`".into()));
    }
    let levels: Vec<u32> = (lo..=hi).collect();
    let opts = sim_options(spec)?;
    let study = refinement_study(&x0, &pots, spec.get("seed")?, &levels, spec.get("horizon")?, &opts)?;
    let path = sample_path(spec, &x0, hi)?;
    let sim = simulate_ske_n_with(&x0, &pots, &path, &opts)?;
    let run = emit_run(out, &sim.trajectory, &sim.ledger, path.step(), outputs)?;
    save_json(out, "summary.json", &json!({ "study": study, "finest_run": run }), outputs)?;
    Ok(format!("refinement gaps over levels {lo}..={hi}, decreasing: {}", study.strictly_decreasing))
}

fn run_probe(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<String> {
    let x0 = initial_config(spec)?;
    let pots = potentials(spec)?;
    let delta: f64 = spec.get("perturbation")?;
    let ball: usize = spec.get("perturb_ball")?;
    let coord: usize = spec.get("perturb_coord")?;
    if ball >= x0.n_balls() || coord >= x0.dim() {
        return Err(Failure::Input("perturbed ball or coordinate out of range".into()));
    }
    let mut x1 = x0.clone();
    x1.position_mut(ball)[coord] += delta;
    let path = sample_path(spec, &x0, spec.get("level")?)?;
    let opts = sim_options(spec)?;
    let report = uniqueness_probe(&x0, &x1, &pots, &path, &opts)?;
    let sim = simulate_ske_n_with(&x0, &pots, &path, &opts)?;
    let run = emit_run(out, &sim.trajectory, &sim.ledger, path.step(), outputs)?;
    save_json(out, "summary.json", &json!({ "probe": report, "run": run }), outputs)?;
    if !report.pre_contact_ok {
        return Err(Failure::Invariant(format!(
            "divergence exceeds the Gronwall envelope before contact (ratio {})",
            report.pre_contact_max_ratio
        )));
    }
    Ok(format!("sup divergence {} with K = {}", report.sup_divergence, report.lipschitz))
}

fn run_cluster(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<String> {
    let x0 = initial_config(spec)?;
    let pots = potentials(spec)?;
    let level: u32 = spec.get("level")?;
    let path = sample_path(spec, &x0, level)?;
    let windows = spec.get_opt::<usize>("windows")?.unwrap_or_else(|| default_window_count(path.horizon(), level));
    let mut opts = LocalizeOptions::new(spec.get("eps")?, windows.min(path.n_steps()));
    opts.eps_guard = spec.get_opt("eps_guard")?;
    opts.sim = sim_options(spec)?;
    let run = localized_simulate(&x0, &pots, &path, &opts)?;
    let mut summary = emit_run(out, &run.trajectory, &run.ledger, path.step(), outputs)?;
    save_json(out, "partitions.json", &run.history, outputs)?;
    summary["windows"] = json!(opts.windows);
    summary["merges"] = json!(run.total_merges());
    summary["force_truncation_exact"] = json!(run.force_truncation_exact);
    save_json(out, "summary.json", &summary, outputs)?;
    Ok(format!("{} windows, {} merges", opts.windows, run.total_merges()))
}

fn gibbs_config(spec: &ExperimentSpec) -> Step<GibbsSamplerConfig> {
    let dim: usize = spec.get("dim")?;
    let radius: f64 = spec.get("radius")?;
    let n: usize = spec.get("n_balls")?;
    let side = match (spec.get_opt::<f64>("packing_fraction")?, boundary(spec)?) {
        (Some(phi), _) => box_side_for_packing(n, dim, radius, phi),
        (None, Boundary::Periodic(l)) => l,
        (None, Boundary::Free) => {
            return Err(Failure::Input("sampling needs `box` or `packing_fraction`".into()));
        }
    };
    let pots = potentials(spec)?;
    Ok(GibbsSamplerConfig {
        dim,
        radius,
        box_side: side,
        n_balls: n,
        pair: pots.pair,
        free: pots.free,
        sweeps: spec.get("sweeps")?,
        proposal_scale: spec.get("proposal_scale")?,
        seed: spec.get("seed")?,
    })
}

fn run_gibbs(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<String> {
    let cfg = gibbs_config(spec)?;
    let chain = gibbs_chain(&cfg, usize::MAX)?;
    let x = chain.final_state;
    if !crate::geometry::validate(&x, 0.0)? {
        return Err(Failure::Invariant("sampled configuration overlaps".into()));
    }
    let p = out.join("config.txt");
    std::fs::write(&p, format_config(&x)).map_err(Error::from)?;
    outputs.push(p);
    let summary = json!({
        "box_side": cfg.box_side,
        "sweeps": cfg.sweeps,
        "burn_in_sweeps": chain.burn_in,
        "acceptance_rate": chain.acceptance_rate,
        "min_pair_distance": x.min_pair_distance().map(|m| m.2),
    });
    save_json(out, "summary.json", &summary, outputs)?;
    Ok(format!("sampled {} balls, acceptance rate {}", cfg.n_balls, chain.acceptance_rate))
}

fn run_reversibility(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<String> {
    let cfg = gibbs_config(spec)?;
    let start = match spec.raw("start")? {
        "gibbs" => ReplicaStart::Gibbs,
        "lattice" => ReplicaStart::Lattice,
        other => return Err(Failure::Input(format!("key `start`: unknown start `{other}`"))),
    };
    let report = reversibility_test(&cfg, spec.get("level")?, spec.get("horizon")?, spec.get("replicas")?, start)?;
    write_histograms_csv(&report.bins, create(out, "histograms.csv", outputs)?)?;
    if report.min_pair_distance_after < cfg.radius * (1.0 - DEFAULT_TOL_HC) {
        return Err(Failure::Invariant(format!(
            "evolved replica overlaps at distance {}",
            report.min_pair_distance_after
        )));
    }
    save_json(out, "summary.json", &report, outputs)?;
    Ok(format!("chi-square {} (p = {}), pass: {}", report.chi_square, report.p_value, report.pass))
}

fn run_diagnostics(spec: &ExperimentSpec, out: &Path, outputs: &mut Vec<PathBuf>) -> Step<String> {
    let x0 = initial_config(spec)?;
    let pots = potentials(spec)?;
    let path = sample_path(spec, &x0, spec.get("level")?)?;
    let sim = simulate_ske_n_with(&x0, &pots, &path, &sim_options(spec)?)?;
    let traj = &sim.trajectory;
    let mut summary = emit_run(out, traj, &sim.ledger, path.step(), outputs)?;
    let horizon = path.horizon();
    let delta: f64 = spec.get("delta")?;
    summary["nbj_m"] = json!(diagnostics_nbj(traj, spec.get("ell")?, horizon));
    summary["trajectory_modulus"] = json!(trajectory_modulus(traj, horizon, delta)?);
    summary["noise_modulus"] = json!(path_modulus(&path, horizon, delta)?);
    if let Some(eps) = spec.get_opt::<f64>("fcp_eps")? {
        let outcome =
            fcp_certificate(traj, eps, spec.get("fcp_p")?, horizon, spec.get("fcp_a")?, spec.get("fcp_windows")?)?;
        if let FcpOutcome::Witness(w) = &outcome {
            verify_witness(w, traj).map_err(Failure::Invariant)?;
        }
        summary["fcp"] = match &outcome {
            FcpOutcome::Witness(_) => json!("witness"),
            FcpOutcome::Refusal(r) => json!({ "refused_window": r.window, "ball": r.ball, "reason": r.reason }),
        };
        save_json(out, "witness.json", &outcome, outputs)?;
    }
    save_json(out, "summary.json", &summary, outputs)?;
    Ok(format!("diagnostics over {} frames", traj.n_frames()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec::parse("level = 5\nn_balls = 3\n", Some(Command::Simulate), None).unwrap();
        let o = run(&spec, dir.path());
        assert_eq!(o.exit_code, EXIT_OK, "{}", o.message);
        for f in ["manifest.json", "trajectory.csv", "ledger.csv", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn overlapping_start_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec::parse("spacing = 0.5\nlevel = 3\n", Some(Command::Simulate), None).unwrap();
        assert_eq!(run(&spec, dir.path()).exit_code, EXIT_INPUT);
    }

    #[test]
    fn non_converging_solver_is_an_invariant_violation() {
        let dir = tempfile::tempdir().unwrap();
        let text = "n_balls = 6\nspacing = 1.0\nlevel = 4\nmax_iter = 1\n";
        let spec = ExperimentSpec::parse(text, Some(Command::Simulate), None).unwrap();
        let o = run(&spec, dir.path());
        assert_eq!(o.exit_code, EXIT_INVARIANT, "{}", o.message);
        assert!(!dir.path().join("trajectory.csv").exists());
    }

    #[test]
    fn manifest_replays() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec::parse("level = 4\nseed = 9\n", Some(Command::Simulate), None).unwrap();
        run(&spec, dir.path());
        let again = load_spec(&dir.path().join("manifest.json"), None, None).unwrap();
        assert_eq!(again, spec);
    }
}
