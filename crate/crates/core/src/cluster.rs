//! Windowed localisation of the dynamics into independently evolving clusters.
//!
//! At the start of every window the configuration is split into the connected
//! components of the `r + eps` proximity graph. Each cluster is evolved on its
//! own, seeing only its own forces, constraints and noise streams. Afterwards
//! every pair of clusters must have stayed more than `r + eps_guard` apart on
//! every grid point of the window; clusters that came closer are merged and the
//! window is replayed for the merged group with the same noise.
//!
//! If the pair cutoff is at most `r + eps_guard`, a passing guard means no
//! force or constraint ever acted across clusters, so the localised run
//! reproduces the monolithic one.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{contact_graph_components, BallConfiguration, UnionFind};
use crate::integrator::{check_preconditions, simulate_window, Simulation, SimulationOptions};
use crate::noise::DyadicBrownianPath;
use crate::potentials::Potentials;
use crate::skorohod::{PairIncrement, ReflectionLedger, StepLedger};
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterPartition {
    pub eps: f64,
    /// Sorted index groups, ordered by smallest member.
    pub groups: Vec<Vec<usize>>,
}

impl ClusterPartition {
    /// Smallest distance between balls of different groups (`inf` for one group).
    pub fn min_inter_cluster_distance(&self, config: &BallConfiguration) -> f64 {
        let mut label = vec![0usize; config.n_balls()];
        for (g, members) in self.groups.iter().enumerate() {
            for &m in members {
                label[m] = g;
            }
        }
        let mut best = f64::INFINITY;
        for j in 0..config.n_balls() {
            for k in j + 1..config.n_balls() {
                if label[j] != label[k] {
                    best = best.min(config.distance(j, k));
                }
            }
        }
        best
    }
}

pub fn detect_clusters(config: &BallConfiguration, eps: f64) -> Result<ClusterPartition> {
    if !(eps > 0.0) {
        return Err(Error::Input(format!("cluster margin must be positive, got {eps}")));
    }
    Ok(ClusterPartition { eps, groups: contact_graph_components(config, eps) })
}

/// Discrete guard event: every ball of `cluster` stayed at distance greater
/// than `r + eps_guard` from every ball of `env` at every grid point.
pub fn guard_check(cluster: &Trajectory, env: &Trajectory, eps_guard: f64) -> Result<bool> {
    Ok(closest_approach(cluster, env)? > cluster.radius() + eps_guard)
}

/// Minimum distance between the two ball sets over the common grid.
pub fn closest_approach(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.n_frames() != b.n_frames() || a.times().iter().zip(b.times()).any(|(s, t)| (s - t).abs() > 1e-12) {
        return Err(Error::Input("guard trajectories are on different grids".into()));
    }
    let boundary = a.boundary();
    let mut best = f64::INFINITY;
    for k in 0..a.n_frames() {
        for i in 0..a.n_balls() {
            let x = a.position(k, i);
            for m in 0..b.n_balls() {
                best = best.min(boundary.distance(x, b.position(k, m)));
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug)]
pub struct LocalizeOptions {
    pub eps: f64,
    /// Defaults to `eps / 2`.
    pub eps_guard: Option<f64>,
    /// Number of windows `M`.
    pub windows: usize,
    pub sim: SimulationOptions,
}

impl LocalizeOptions {
    pub fn new(eps: f64, windows: usize) -> Self {
        Self { eps, eps_guard: None, windows, sim: SimulationOptions::default() }
    }

    pub fn guard_margin(&self) -> f64 {
        self.eps_guard.unwrap_or(0.5 * self.eps)
    }
}

/// Default window count `ceil(T 2^(n/2))`.
pub fn default_window_count(horizon: f64, level: u32) -> usize {
    (horizon * 2f64.powf(level as f64 / 2.0)).ceil().max(1.0) as usize
}

#[derive(Clone, Debug, Serialize)]
pub struct GuardOutcome {
    pub a: usize,
    pub b: usize,
    pub closest: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowRecord {
    pub index: usize,
    pub steps: (usize, usize),
    pub t_start: f64,
    pub t_end: f64,
    pub initial_groups: Vec<Vec<usize>>,
    pub final_groups: Vec<Vec<usize>>,
    /// Groups formed by merge-and-replay, in order of creation.
    pub merges: Vec<Vec<usize>>,
    /// Guard outcomes of the accepted partition, one per pair of groups.
    pub guards: Vec<GuardOutcome>,
    pub replays: usize,
    pub min_inter_cluster_distance_at_start: f64,
}

#[derive(Clone, Debug)]
pub struct LocalizedRun {
    pub trajectory: Trajectory,
    pub ledger: ReflectionLedger,
    pub history: Vec<WindowRecord>,
    /// True if the cutoff guarantees that a passing guard leaves no cross-cluster force.
    pub force_truncation_exact: bool,
}

impl LocalizedRun {
    pub fn total_merges(&self) -> usize {
        self.history.iter().map(|w| w.merges.len()).sum()
    }
}

/// Window boundaries on the step grid, `s_i = round(i * steps / M)`.
pub fn window_bounds(n_steps: usize, windows: usize) -> Vec<usize> {
    (0..=windows).map(|i| ((i as f64) * n_steps as f64 / windows as f64).round() as usize).collect()
}

pub fn localized_simulate(
    x0: &BallConfiguration,
    pots: &Potentials,
    path: &DyadicBrownianPath,
    opts: &LocalizeOptions,
) -> Result<LocalizedRun> {
    check_preconditions(x0, pots, path)?;
    if opts.windows == 0 || opts.windows > path.n_steps() {
        return Err(Error::Input(format!("window count {} must lie in 1..={}", opts.windows, path.n_steps())));
    }
    let eps_guard = opts.guard_margin();
    if !(eps_guard > 0.0 && eps_guard <= opts.eps) {
        return Err(Error::Input(format!("guard margin {eps_guard} must lie in (0, eps]")));
    }
    let n = x0.n_balls();
    let d = x0.dim();
    let r = x0.radius();
    let h = path.step();
    let bounds = window_bounds(path.n_steps(), opts.windows);

    let mut traj = Trajectory::starting_at(x0, 0.0);
    let mut ledger = ReflectionLedger::new(n, d);
    let mut history = Vec::with_capacity(opts.windows);
    let mut cur = x0.clone();

    for (index, w) in bounds.windows(2).enumerate() {
        let steps = w[0]..w[1];
        let partition = detect_clusters(&cur, opts.eps)?;
        let start_gap = partition.min_inter_cluster_distance(&cur);
        let mut groups = partition.groups.clone();
        let mut merges = Vec::new();
        let mut replays = 0;
        let (runs, guards) = loop {
            let runs = run_groups(&cur, &groups, pots, path, steps.clone(), &opts.sim)?;
            let guards = guard_all(&runs, &groups, eps_guard, r)?;
            if guards.iter().all(|g| g.passed) {
                break (runs, guards);
            }
            let mut uf = UnionFind::new(groups.len());
            for g in guards.iter().filter(|g| !g.passed) {
                uf.union(g.a, g.b);
            }
            let mut merged: Vec<Vec<usize>> = uf
                .groups()
                .into_iter()
                .map(|ids| {
                    let mut m: Vec<usize> = ids.iter().flat_map(|&g| groups[g].iter().copied()).collect();
                    m.sort_unstable();
                    m
                })
                .collect();
            merged.sort_by_key(|g| g[0]);
            for (ids, m) in uf.groups().iter().zip(&merged) {
                if ids.len() > 1 {
                    merges.push(m.clone());
                }
            }
            groups = merged;
            replays += 1;
        };

        assemble_window(&mut traj, &mut ledger, &runs, &groups, n, d, steps.clone(), h);
        cur = traj.final_config();
        history.push(WindowRecord {
            index,
            steps: (steps.start, steps.end),
            t_start: steps.start as f64 * h,
            t_end: steps.end as f64 * h,
            initial_groups: partition.groups,
            final_groups: groups,
            merges,
            guards,
            replays,
            min_inter_cluster_distance_at_start: start_gap,
        });
    }

    let force_truncation_exact = pots.pair.is_zero() || pots.pair.cutoff.is_some_and(|rc| rc <= r + eps_guard);
    Ok(LocalizedRun { trajectory: traj, ledger, history, force_truncation_exact })
}

fn run_groups(
    cur: &BallConfiguration,
    groups: &[Vec<usize>],
    pots: &Potentials,
    path: &DyadicBrownianPath,
    steps: std::ops::Range<usize>,
    sim: &SimulationOptions,
) -> Result<Vec<Simulation>> {
    groups
        .par_iter()
        .map(|g| {
            let sub = cur.subset(g);
            let sub_opts = SimulationOptions {
                mobile: sim.mobile.as_ref().map(|m| g.iter().map(|&i| m[i]).collect()),
                ..sim.clone()
            };
            simulate_window(&sub, g, pots, path, steps.clone(), &sub_opts)
        })
        .collect()
}

fn guard_all(runs: &[Simulation], groups: &[Vec<usize>], eps_guard: f64, r: f64) -> Result<Vec<GuardOutcome>> {
    let mut out = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let closest = closest_approach(&runs[a].trajectory, &runs[b].trajectory)?;
            out.push(GuardOutcome { a, b, closest, passed: closest > r + eps_guard });
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn assemble_window(
    traj: &mut Trajectory,
    ledger: &mut ReflectionLedger,
    runs: &[Simulation],
    groups: &[Vec<usize>],
    n: usize,
    d: usize,
    steps: std::ops::Range<usize>,
    h: f64,
) {
    let mut frame = vec![0.0; n * d];
    for (s, k) in steps.enumerate() {
        let mut dphi = vec![0.0; n * d];
        let mut pairs: Vec<PairIncrement> = Vec::new();
        for (run, g) in runs.iter().zip(groups) {
            for (local, &global) in g.iter().enumerate() {
                frame[global * d..(global + 1) * d].copy_from_slice(run.trajectory.position(s + 1, local));
            }
            let step = &run.ledger.steps()[s];
            for (local, &global) in g.iter().enumerate() {
                dphi[global * d..(global + 1) * d].copy_from_slice(&step.dphi[local * d..(local + 1) * d]);
            }
            pairs.extend(step.pairs.iter().map(|p| PairIncrement {
                j: g[p.j],
                k: g[p.k],
                dl: p.dl,
                vector: p.vector.clone(),
            }));
        }
        pairs.sort_by_key(|p| (p.j, p.k));
        let sweeps = runs.iter().map(|r| r.ledger.steps()[s].sweeps).max().unwrap_or(0);
        traj.push((k + 1) as f64 * h, &frame);
        ledger.push(StepLedger { dphi, pairs, sweeps });
    }
}
