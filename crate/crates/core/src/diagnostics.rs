//! Runtime diagnostics on recorded trajectories and driving paths.

use crate::error::{Error, Result};
use crate::noise::DyadicBrownianPath;
use crate::trajectory::Trajectory;

/// Ball labels sorted by initial distance from the origin (ties by index).
pub fn label_order(traj: &Trajectory) -> Vec<usize> {
    let mut order: Vec<usize> = (0..traj.n_balls()).collect();
    let norm = |j: usize| traj.position(0, j).iter().map(|v| v * v).sum::<f64>();
    order.sort_by(|&a, &b| norm(a).total_cmp(&norm(b)).then(a.cmp(&b)));
    order
}

/// No-big-jump index: the smallest `m` such that every ball whose label
/// exceeds `m` stays outside `U_ell(0)` on every grid point in `[0, T]`.
/// Labels are 1-based ranks in [`label_order`].
pub fn diagnostics_nbj(traj: &Trajectory, ell: f64, horizon: f64) -> usize {
    let order = label_order(traj);
    let last = traj.times().iter().rposition(|&t| t <= horizon + 1e-12);
    let Some(last) = last else { return 0 };
    let mut m = 0;
    for (rank, &j) in order.iter().enumerate() {
        let enters = (0..=last).any(|k| traj.position(k, j).iter().map(|v| v * v).sum::<f64>().sqrt() <= ell);
        if enters {
            m = rank + 1;
        }
    }
    m
}

/// `sup |w(s) - w(t)|` over grid pairs with `|s - t| <= delta` in `[0, T]`.
pub fn modulus_of_continuity(times: &[f64], frames: &[&[f64]], horizon: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Input(format!("delta must be positive, got {delta}")));
    }
    if times.len() != frames.len() {
        return Err(Error::Input("times and frames differ in length".into()));
    }
    let end = times.iter().rposition(|&t| t <= horizon + 1e-12).map_or(0, |i| i + 1);
    let mut best: f64 = 0.0;
    for s in 0..end {
        for t in s + 1..end {
            if times[t] - times[s] > delta + 1e-12 {
                break;
            }
            let d2: f64 = frames[s].iter().zip(frames[t]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(d2.sqrt());
        }
    }
    Ok(best)
}

pub fn trajectory_modulus(traj: &Trajectory, horizon: f64, delta: f64) -> Result<f64> {
    let frames: Vec<&[f64]> = (0..traj.n_frames()).map(|k| traj.frame(k)).collect();
    modulus_of_continuity(traj.times(), &frames, horizon, delta)
}

pub fn path_modulus(path: &DyadicBrownianPath, horizon: f64, delta: f64) -> Result<f64> {
    let frames: Vec<&[f64]> = (0..=path.n_steps()).map(|k| path.frame(k)).collect();
    let times: Vec<f64> = (0..=path.n_steps()).map(|k| k as f64 * path.step()).collect();
    modulus_of_continuity(&times, &frames, horizon, delta)
}

/// Least-squares constant `c` in `Delta(delta) ~ c sqrt(delta log(1/delta))`.
pub fn fit_continuity_envelope(deltas: &[f64], moduli: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&d, &m) in deltas.iter().zip(moduli) {
        let g = (d * (1.0 / d).ln()).sqrt();
        num += g * m;
        den += g * g;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BallConfiguration, Boundary};

    fn traj_1d(rows: &[Vec<f64>]) -> Trajectory {
        let cfg = BallConfiguration::new(1, 0.5, rows[0].clone(), Boundary::Free).unwrap();
        let times: Vec<f64> = (0..rows.len()).map(|k| k as f64 * 0.25).collect();
        Trajectory::from_frames(&cfg, times, rows.to_vec()).unwrap()
    }

    #[test]
    fn nbj_examples() {
        let far = traj_1d(&[vec![5.0, -6.0], vec![5.5, -6.5]]);
        assert_eq!(diagnostics_nbj(&far, 2.0, 1.0), 0);
        // nearest ball dips into U_2
        let near = traj_1d(&[vec![3.0, -6.0], vec![1.0, -6.0]]);
        assert_eq!(diagnostics_nbj(&near, 2.0, 1.0), 1);
        // outer ball dives in, so m covers it
        let deep = traj_1d(&[vec![3.0, -6.0], vec![3.0, 0.5]]);
        assert_eq!(diagnostics_nbj(&deep, 2.0, 1.0), 2);
    }

    #[test]
    fn continuity_examples() {
        let flat = traj_1d(&[vec![1.0], vec![1.0], vec![1.0]]);
        assert_eq!(trajectory_modulus(&flat, 1.0, 0.5).unwrap(), 0.0);
        let line = traj_1d(&(0..9).map(|k| vec![3.0 * k as f64 * 0.25]).collect::<Vec<_>>());
        assert!((trajectory_modulus(&line, 2.0, 0.5).unwrap() - 1.5).abs() < 1e-12);
        assert!(trajectory_modulus(&line, 2.0, 0.0).is_err());
    }
}
