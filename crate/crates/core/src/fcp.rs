//! Finite-range communication certificate for a recorded trajectory.
//!
//! Given a time split into `M` equal windows, the witness is a chain of open
//! sets `O_0 ⊇ O_1 ⊇ ... ⊇ O_{M-1}` such that
//!
//! * `U_{a+M}(0) ⊆ O_{M-1}` and `O_0 ⊆ U_{a+M+M^p}(0)`,
//! * `U_eps(O_{i+1}) ⊆ O_i`,
//! * in window `i` every ball either starts in `O_i` and keeps its
//!   `(r+eps)/2` neighbourhood inside `O_i`, or never lets that
//!   neighbourhood touch `O_i`.
//!
//! Sets are finite unions of open balls and open boxes snapped to an `eps/2`
//! grid. Construction runs from the innermost set outward: each set is the
//! `eps`-expansion of the next one, enlarged by the swept bounding box of every
//! ball whose neighbourhood meets it, until nothing more is absorbed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

const TIME_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    fn expanded(&self, eps: f64) -> Region {
        match self {
            Region::Ball { center, radius } => Region::Ball { center: center.clone(), radius: radius + eps },
            Region::Box { lo, hi } => {
                Region::Box { lo: lo.iter().map(|v| v - eps).collect(), hi: hi.iter().map(|v| v + eps).collect() }
            }
        }
    }

    /// Open region meets the open ball `U_rho(x)`.
    pub fn meets_ball(&self, x: &[f64], rho: f64) -> bool {
        match self {
            Region::Ball { center, radius } => norm_diff(x, center) < rho + radius,
            Region::Box { lo, hi } => {
                let mut s = 0.0;
                for a in 0..x.len() {
                    let e = (lo[a] - x[a]).max(x[a] - hi[a]).max(0.0);
                    s += e * e;
                }
                s.sqrt() < rho
            }
        }
    }

    /// `U_rho(x)` lies inside the region.
    pub fn contains_ball(&self, x: &[f64], rho: f64) -> bool {
        match self {
            Region::Ball { center, radius } => norm_diff(x, center) + rho <= *radius,
            Region::Box { lo, hi } => (0..x.len()).all(|a| lo[a] <= x[a] - rho && x[a] + rho <= hi[a]),
        }
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => norm_diff(x, center) < *radius,
            Region::Box { lo, hi } => (0..x.len()).all(|a| lo[a] < x[a] && x[a] < hi[a]),
        }
    }

    /// `self ⊆ other`
    pub fn inside(&self, other: &Region) -> bool {
        match self {
            Region::Ball { center, radius } => other.contains_ball(center, *radius),
            Region::Box { lo, hi } => match other {
                Region::Box { lo: lo2, hi: hi2 } => (0..lo.len()).all(|a| lo2[a] <= lo[a] && hi[a] <= hi2[a]),
                Region::Ball { center, radius } => {
                    let far: f64 = (0..lo.len())
                        .map(|a| {
                            let e = (lo[a] - center[a]).abs().max((hi[a] - center[a]).abs());
                            e * e
                        })
                        .sum();
                    far.sqrt() <= *radius
                }
            },
        }
    }

    /// `sup |y|` over the region.
    pub fn outer_radius(&self) -> f64 {
        match self {
            Region::Ball { center, radius } => norm(center) + radius,
            Region::Box { lo, hi } => (0..lo.len()).map(|a| lo[a].abs().max(hi[a].abs()).powi(2)).sum::<f64>().sqrt(),
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct OpenSet {
    pub regions: Vec<Region>,
}

impl OpenSet {
    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.regions.iter().any(|r| r.contains_point(x))
    }

    pub fn meets_ball(&self, x: &[f64], rho: f64) -> bool {
        self.regions.iter().any(|r| r.meets_ball(x, rho))
    }

    /// Sufficient containment test: some single region holds the whole ball.
    pub fn contains_ball(&self, x: &[f64], rho: f64) -> bool {
        self.regions.iter().any(|r| r.contains_ball(x, rho))
    }

    pub fn outer_radius(&self) -> f64 {
        self.regions.iter().map(Region::outer_radius).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FcpWitness {
    pub eps: f64,
    pub p: u32,
    pub horizon: f64,
    pub a: u64,
    pub windows: usize,
    /// Frame ranges (inclusive) of each window.
    pub window_frames: Vec<(usize, usize)>,
    /// `open_sets[i]` is `O_i`.
    pub open_sets: Vec<OpenSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FcpRefusal {
    pub window: usize,
    pub ball: Option<usize>,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FcpOutcome {
    Witness(FcpWitness),
    Refusal(FcpRefusal),
}

impl FcpOutcome {
    pub fn witness(&self) -> Option<&FcpWitness> {
        match self {
            FcpOutcome::Witness(w) => Some(w),
            FcpOutcome::Refusal(_) => None,
        }
    }

    pub fn refusal(&self) -> Option<&FcpRefusal> {
        match self {
            FcpOutcome::Refusal(r) => Some(r),
            FcpOutcome::Witness(_) => None,
        }
    }
}

/// Frame ranges of the `M` windows `[iT/M, (i+1)T/M]`, endpoints shared.
pub fn window_frames(traj: &Trajectory, horizon: f64, windows: usize) -> Result<Vec<(usize, usize)>> {
    let times = traj.times();
    if times.is_empty() || times[0] > TIME_TOL || *times.last().unwrap() < horizon - TIME_TOL {
        return Err(Error::Input(format!("trajectory does not cover [0, {horizon}]")));
    }
    let mut out = Vec::with_capacity(windows);
    for i in 0..windows {
        let t0 = horizon * i as f64 / windows as f64;
        let t1 = horizon * (i + 1) as f64 / windows as f64;
        let first = times.iter().position(|&t| t >= t0 - TIME_TOL).unwrap();
        let last = times.iter().rposition(|&t| t <= t1 + TIME_TOL).unwrap();
        if last < first {
            return Err(Error::Input(format!("window {i} contains no grid point")));
        }
        out.push((first, last));
    }
    Ok(out)
}

struct Tagged {
    region: Region,
    window: usize,
    ball: Option<usize>,
}

pub fn fcp_certificate(
    traj: &Trajectory,
    eps: f64,
    p: u32,
    horizon: f64,
    a: u64,
    windows: usize,
) -> Result<FcpOutcome> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Input(format!("eps must be positive, got {eps}")));
    }
    if p < 1 || windows < 1 {
        return Err(Error::Input("p and M must be at least 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
    }
    let frames = window_frames(traj, horizon, windows)?;
    let d = traj.dim();
    let n = traj.n_balls();
    let rho = 0.5 * (traj.radius() + eps);
    let grid = 0.5 * eps;
    let m = windows as f64;
    let inner = a as f64 + m;
    let outer = inner + m.powi(p as i32);

    let mut sets: Vec<Vec<Tagged>> = Vec::with_capacity(windows);
    let mut current =
        vec![Tagged { region: Region::Ball { center: vec![0.0; d], radius: inner }, window: windows - 1, ball: None }];
    for i in (0..windows).rev() {
        if i + 1 < windows {
            current = current
                .iter()
                .map(|t| Tagged { region: t.region.expanded(eps), window: t.window, ball: t.ball })
                .collect();
        }
        let (f0, f1) = frames[i];
        let mut absorbed = vec![false; n];
        loop {
            let mut changed = false;
            for j in 0..n {
                if absorbed[j] {
                    continue;
                }
                let touches = (f0..=f1).any(|k| {
                    let x = traj.position(k, j);
                    current.iter().any(|t| t.region.meets_ball(x, rho))
                });
                if !touches {
                    continue;
                }
                absorbed[j] = true;
                changed = true;
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for k in f0..=f1 {
                    let x = traj.position(k, j);
                    for c in 0..d {
                        lo[c] = lo[c].min(x[c] - rho);
                        hi[c] = hi[c].max(x[c] + rho);
                    }
                }
                let region = Region::Box {
                    lo: lo.iter().map(|v| (v / grid).floor() * grid).collect(),
                    hi: hi.iter().map(|v| (v / grid).ceil() * grid).collect(),
                };
                // a ball already covered by one region adds nothing new
                if !current.iter().any(|t| region.inside(&t.region)) {
                    current.push(Tagged { region, window: i, ball: Some(j) });
                }
            }
            if !changed {
                break;
            }
        }
        sets.push(
            current.iter().map(|t| Tagged { region: t.region.clone(), window: t.window, ball: t.ball }).collect(),
        );
    }
    sets.reverse();

    // blame the region that reaches furthest beyond the outer ball
    if let Some(worst) = sets[0]
        .iter()
        .filter(|t| t.region.outer_radius() > outer)
        .max_by(|x, y| x.region.outer_radius().total_cmp(&y.region.outer_radius()))
    {
        return Ok(FcpOutcome::Refusal(FcpRefusal {
            window: worst.window,
            ball: worst.ball,
            reason: format!(
                "communication region reaches |x| = {} beyond the admissible radius {}",
                worst.region.outer_radius(),
                outer
            ),
        }));
    }

    Ok(FcpOutcome::Witness(FcpWitness {
        eps,
        p,
        horizon,
        a,
        windows,
        window_frames: frames,
        open_sets: sets.into_iter().map(|s| OpenSet { regions: s.into_iter().map(|t| t.region).collect() }).collect(),
    }))
}

/// Checks every defining property of a witness against the trajectory.
pub fn verify_witness(w: &FcpWitness, traj: &Trajectory) -> std::result::Result<(), String> {
    let d = traj.dim();
    let m = w.windows as f64;
    let inner = Region::Ball { center: vec![0.0; d], radius: w.a as f64 + m };
    let outer = w.a as f64 + m + m.powi(w.p as i32);
    let rho = 0.5 * (traj.radius() + w.eps);
    if w.open_sets.len() != w.windows || w.window_frames.len() != w.windows {
        return Err("witness has the wrong number of sets".into());
    }
    if !w.open_sets[w.windows - 1].regions.iter().any(|r| inner.inside(r)) {
        return Err("innermost set does not contain the inner ball".into());
    }
    for (i, set) in w.open_sets.iter().enumerate() {
        if set.outer_radius() > outer {
            return Err(format!("O_{i} leaves the outer ball"));
        }
    }
    for i in 0..w.windows - 1 {
        for r in &w.open_sets[i + 1].regions {
            let grown = r.expanded(w.eps);
            if !w.open_sets[i].regions.iter().any(|q| grown.inside(q)) {
                return Err(format!("eps-neighbourhood of O_{} is not inside O_{i}", i + 1));
            }
        }
    }
    for (i, &(f0, f1)) in w.window_frames.iter().enumerate() {
        let set = &w.open_sets[i];
        for j in 0..traj.n_balls() {
            let inside = set.contains_point(traj.position(f0, j));
            for k in f0..=f1 {
                let x = traj.position(k, j);
                if inside && !set.contains_ball(x, rho) {
                    return Err(format!("ball {j} leaves O_{i} at frame {k}"));
                }
                if !inside && set.meets_ball(x, rho) {
                    return Err(format!("ball {j} enters O_{i} at frame {k}"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BallConfiguration, Boundary};

    fn still(points: &[[f64; 2]], frames: usize) -> Trajectory {
        let cfg =
            BallConfiguration::from_points(1.0, &points.iter().map(|p| p.to_vec()).collect::<Vec<_>>(), Boundary::Free)
                .unwrap();
        let times: Vec<f64> = (0..frames).map(|k| k as f64 / (frames - 1) as f64).collect();
        let pos = cfg.positions().to_vec();
        Trajectory::from_frames(&cfg, times, vec![pos; frames]).unwrap()
    }

    #[test]
    fn static_balls_get_a_witness() {
        let traj = still(&[[0.0, 0.0], [3.0, 0.0], [40.0, 0.0]], 5);
        let out = fcp_certificate(&traj, 0.2, 1, 1.0, 2, 2).unwrap();
        let w = out.witness().expect("witness");
        verify_witness(w, &traj).unwrap();
    }

    #[test]
    fn far_travelling_ball_is_refused_with_its_window() {
        let cfg = BallConfiguration::from_points(1.0, &[vec![0.0, 0.0]], Boundary::Free).unwrap();
        let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let frames = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![30.0, 0.0], vec![30.0, 0.0]];
        let traj = Trajectory::from_frames(&cfg, times, frames).unwrap();
        let out = fcp_certificate(&traj, 0.2, 1, 1.0, 1, 2).unwrap();
        let r = out.refusal().expect("refusal");
        assert_eq!(r.window, 1);
        assert_eq!(r.ball, Some(0));
    }

    #[test]
    fn tampered_witness_fails_verification() {
        let traj = still(&[[0.0, 0.0], [3.5, 0.0]], 3);
        let mut w = fcp_certificate(&traj, 0.2, 1, 1.0, 2, 2).unwrap().witness().unwrap().clone();
        w.open_sets[0].regions.truncate(1);
        w.open_sets[0].regions[0] = Region::Ball { center: vec![0.0, 0.0], radius: 3.0 };
        assert!(verify_witness(&w, &traj).is_err());
    }

    #[test]
    fn region_geometry() {
        let b = Region::Box { lo: vec![0.0, 0.0], hi: vec![2.0, 2.0] };
        assert!(b.meets_ball(&[3.0, 1.0], 1.5));
        assert!(!b.meets_ball(&[3.0, 1.0], 1.0));
        assert!(b.contains_ball(&[1.0, 1.0], 1.0));
        let big = Region::Ball { center: vec![1.0, 1.0], radius: 2f64.sqrt() };
        assert!(b.inside(&big));
        assert!((b.outer_radius() - 8f64.sqrt()).abs() < 1e-15);
    }
}
