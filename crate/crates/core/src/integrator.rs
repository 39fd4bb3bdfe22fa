//! Frozen-drift dyadic scheme: on each step `[(k-1) 2^-n, k 2^-n]` the drift
//! is evaluated once at the left endpoint, added to the Brownian increment,
//! and the resulting segment is handed to the reflection solver.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{validate, BallConfiguration};
use crate::noise::DyadicBrownianPath;
use crate::potentials::{drift_field, lipschitz_bound, ruelle_check, Potentials};
use crate::skorohod::{
    fit_contraction_constant, solve_step_with, DrivingSegment, ProjectionSettings, ReflectionLedger,
};
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, Default)]
pub struct SimulationOptions {
    pub projection: ProjectionSettings,
    /// Balls marked `false` are held fixed and act as a frozen environment.
    pub mobile: Option<Vec<bool>>,
    /// Keep the per-step driving segments (needed by the contraction envelope).
    pub keep_driving: bool,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub ledger: ReflectionLedger,
    /// Empty unless requested through [`SimulationOptions::keep_driving`].
    pub driving: Vec<DrivingSegment>,
}

/// Runs the scheme over the whole noise path.
pub fn simulate_ske_n(x0: &BallConfiguration, pots: &Potentials, path: &DyadicBrownianPath) -> Result<Simulation> {
    simulate_ske_n_with(x0, pots, path, &SimulationOptions::default())
}

pub fn simulate_ske_n_with(
    x0: &BallConfiguration,
    pots: &Potentials,
    path: &DyadicBrownianPath,
    opts: &SimulationOptions,
) -> Result<Simulation> {
    check_preconditions(x0, pots, path)?;
    let ids: Vec<usize> = (0..x0.n_balls()).collect();
    simulate_window(x0, &ids, pots, path, 0..path.n_steps(), opts)
}

pub(crate) fn check_preconditions(x0: &BallConfiguration, pots: &Potentials, path: &DyadicBrownianPath) -> Result<()> {
    if path.dim() != x0.dim() || path.n_balls() < x0.n_balls() {
        return Err(Error::Input(format!(
            "noise path ({} balls, d = {}) does not cover the configuration ({} balls, d = {})",
            path.n_balls(),
            path.dim(),
            x0.n_balls(),
            x0.dim()
        )));
    }
    if !validate(x0, crate::geometry::DEFAULT_TOL_HC * x0.radius())? {
        return Err(Error::Input("initial configuration violates the hard core".into()));
    }
    if pots.pair.cutoff.is_none() && !pots.pair.is_zero() {
        ruelle_check(&pots.pair, x0.radius(), x0.dim())?;
    }
    Ok(())
}

/// Evolves the sub-system `x0` whose balls carry the global labels `ball_ids`
/// over the dyadic steps `steps`. Only forces and constraints among these balls
/// are seen; noise is read from each ball's own stream.
pub(crate) fn simulate_window(
    x0: &BallConfiguration,
    ball_ids: &[usize],
    pots: &Potentials,
    path: &DyadicBrownianPath,
    steps: Range<usize>,
    opts: &SimulationOptions,
) -> Result<Simulation> {
    let n = x0.n_balls();
    let d = x0.dim();
    let h = path.step();
    let tol_hc = opts.projection.tol_hc * x0.radius();
    let mobile = opts.mobile.as_deref();
    if let Some(m) = mobile {
        if m.len() != n {
            return Err(Error::Input("mobility mask length mismatch".into()));
        }
    }

    let mut traj = Trajectory::starting_at(x0, steps.start as f64 * h);
    let mut ledger = ReflectionLedger::new(n, d);
    let mut driving = Vec::new();
    let mut cur = x0.clone();
    let mut drift = vec![0.0; n * d];
    let mut inc = vec![0.0; d];

    for k in steps {
        drift_field(&cur, pots, tol_hc, &mut drift).map_err(|e| relabel(e, ball_ids))?;
        let mut displacement = vec![0.0; n * d];
        for (i, &id) in ball_ids.iter().enumerate() {
            if mobile.is_some_and(|m| !m[i]) {
                continue;
            }
            path.increment_into(k, id, &mut inc);
            for a in 0..d {
                displacement[i * d + a] = inc[a] + drift[i * d + a] * h;
            }
        }
        let seg = DrivingSegment { dt: h, displacement };
        let (next, step) = solve_step_with(&cur, &seg, &opts.projection, mobile)?;
        traj.push((k + 1) as f64 * h, next.positions());
        ledger.push(step);
        if opts.keep_driving {
            driving.push(seg);
        }
        cur = next;
    }
    Ok(Simulation { trajectory: traj, ledger, driving })
}

fn relabel(e: Error, ids: &[usize]) -> Error {
    match e {
        Error::Domain { j, k, distance, radius } => Error::Domain { j: ids[j], k: ids[k], distance, radius },
        other => other,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelGap {
    pub coarse: u32,
    pub fine: u32,
    pub sup_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementStudy {
    pub gaps: Vec<LevelGap>,
    /// Least-squares slope of `ln(gap)` against the coarse level; `None` if a gap vanishes.
    pub slope: Option<f64>,
    /// `-slope`
    pub rate: Option<f64>,
    pub strictly_decreasing: bool,
}

/// Runs the scheme at every level of `levels` on one Brownian path refined in
/// place, and measures `sup_t |X_n(t) - X_m(t)|` between consecutive levels on
/// the coarser grid.
pub fn refinement_study(
    x0: &BallConfiguration,
    pots: &Potentials,
    seed: u64,
    levels: &[u32],
    horizon: f64,
    opts: &SimulationOptions,
) -> Result<RefinementStudy> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("levels must be non-empty and strictly ascending".into()));
    }
    let mut path = DyadicBrownianPath::sample(seed, levels[0], horizon, x0.n_balls(), x0.dim())?;
    let mut runs = Vec::with_capacity(levels.len());
    for &level in levels {
        while path.level() < level {
            path = path.refine();
        }
        check_preconditions(x0, pots, &path)?;
        let ids: Vec<usize> = (0..x0.n_balls()).collect();
        runs.push(simulate_window(x0, &ids, pots, &path, 0..path.n_steps(), opts)?.trajectory);
    }
    let mut gaps = Vec::new();
    for (i, w) in levels.windows(2).enumerate() {
        let factor = 1usize << (w[1] - w[0]);
        let (coarse, fine) = (&runs[i], &runs[i + 1]);
        let mut sup = 0.0f64;
        for k in 0..coarse.n_frames() {
            let diff =
                coarse.frame(k).iter().zip(fine.frame(k * factor)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            sup = sup.max(diff);
        }
        gaps.push(LevelGap { coarse: w[0], fine: w[1], sup_gap: sup });
    }
    let strictly_decreasing = gaps.windows(2).all(|w| w[1].sup_gap < w[0].sup_gap);
    let slope = log_slope(&gaps);
    Ok(RefinementStudy { gaps, slope, rate: slope.map(|s| -s), strictly_decreasing })
}

fn log_slope(gaps: &[LevelGap]) -> Option<f64> {
    if gaps.len() < 2 || gaps.iter().any(|g| !(g.sup_gap > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = gaps.iter().map(|g| g.coarse as f64).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.sup_gap.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub initial_gap: f64,
    pub lipschitz: f64,
    /// `|X(t_k) - X'(t_k)|` per frame.
    pub divergence: Vec<f64>,
    pub sup_divergence: f64,
    /// `|x0 - x0'| e^{K t_k}` per frame.
    pub gronwall_envelope: Vec<f64>,
    /// Last frame index before either run first reflects (all frames if neither does).
    pub pre_contact_frames: usize,
    /// Worst `divergence / envelope` over the pre-contact frames.
    pub pre_contact_max_ratio: f64,
    pub pre_contact_ok: bool,
    pub first_contact_step: Option<usize>,
    /// Smallest `C` satisfying the contraction envelope with measured `||phi||`.
    pub fitted_contraction_constant: Option<f64>,
}

/// Runs the scheme from two nearby starts on identical noise and compares the
/// divergence against the Gronwall envelope (before the first reflection) and
/// the contraction envelope (throughout).
pub fn uniqueness_probe(
    x0: &BallConfiguration,
    x0_perturbed: &BallConfiguration,
    pots: &Potentials,
    path: &DyadicBrownianPath,
    opts: &SimulationOptions,
) -> Result<UniquenessReport> {
    if x0.n_balls() != x0_perturbed.n_balls() || x0.dim() != x0_perturbed.dim() {
        return Err(Error::Input("starting configurations differ in shape".into()));
    }
    let k_lip = lipschitz_bound(&pots.pair, &pots.free, x0.radius(), x0.dim())?;
    let opts = SimulationOptions { keep_driving: true, ..opts.clone() };
    let a = simulate_ske_n_with(x0, pots, path, &opts)?;
    let b = simulate_ske_n_with(x0_perturbed, pots, path, &opts)?;

    let frames = a.trajectory.n_frames();
    let divergence: Vec<f64> = (0..frames)
        .map(|k| {
            a.trajectory.frame(k).iter().zip(b.trajectory.frame(k)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        })
        .collect();
    let initial_gap = divergence[0];
    let gronwall_envelope: Vec<f64> = a.trajectory.times().iter().map(|t| initial_gap * (k_lip * t).exp()).collect();

    let first_contact_step = match (a.ledger.first_contact_step(), b.ledger.first_contact_step()) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    };
    // frame s is the state before step s runs
    let pre_contact_frames = first_contact_step.map_or(frames, |s| s + 1);
    let mut ratio = 0.0f64;
    let mut ok = true;
    for k in 0..pre_contact_frames {
        let scale = a.trajectory.frame(k).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // representation error of the positions themselves
        let slack = 4.0 * f64::EPSILON * (1.0 + scale);
        if divergence[k] > gronwall_envelope[k] + slack {
            ok = false;
        }
        if gronwall_envelope[k] > 0.0 {
            ratio = ratio.max(divergence[k] / gronwall_envelope[k]);
        }
    }
    let fitted =
        fit_contraction_constant((&a.trajectory, &a.ledger), (&b.trajectory, &b.ledger), &a.driving, &b.driving)?;

    Ok(UniquenessReport {
        initial_gap,
        lipschitz: k_lip,
        sup_divergence: divergence.iter().copied().fold(0.0, f64::max),
        divergence,
        gronwall_envelope,
        pre_contact_frames,
        pre_contact_max_ratio: ratio,
        pre_contact_ok: ok,
        first_contact_step,
        fitted_contraction_constant: fitted,
    })
}
