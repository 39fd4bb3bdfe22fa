//! Discrete Skorohod problem in the hard-ball configuration space.
//!
//! A step moves the configuration by a driving displacement and then restores
//! feasibility. The corrected positions satisfy the implicit reflection identity
//!
//! ```text
//! x_new^j = x^j + w^j + sum_k (x_new^j - x_new^k) dL^{jk},   dL^{jk} >= 0,
//! dL^{jk} > 0  =>  |x_new^j - x_new^k| = r,
//! ```
//!
//! solved by projected Gauss-Seidel sweeps over pairs in lexicographic order.
//! Each pair update removes the pair's current reflection, and if the residual
//! separation `b` is shorter than `r` re-applies a push along `b` that lands the
//! pair exactly at distance `r`; otherwise the pair is released (`dL = 0`).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{validate, BallConfiguration, DEFAULT_TOL_CONTACT, DEFAULT_TOL_HC};
use crate::trajectory::Trajectory;

/// Tolerances of the projection, all relative to the diameter `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProjectionSettings {
    pub tol_proj: f64,
    pub max_iter: usize,
    pub tol_contact: f64,
    pub tol_hc: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self { tol_proj: 1e-10, max_iter: 10_000, tol_contact: DEFAULT_TOL_CONTACT, tol_hc: DEFAULT_TOL_HC }
    }
}

/// One step of driving input: Brownian increment plus frozen drift times `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivingSegment {
    pub dt: f64,
    pub displacement: Vec<f64>,
}

/// Reflection exchanged by one pair during one step. Ball `j` moved by
/// `vector`, ball `k` by `-vector` (times their mobilities).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairIncrement {
    pub j: usize,
    pub k: usize,
    pub dl: f64,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct StepLedger {
    /// Reflection displacement of the whole configuration, ball-major.
    pub dphi: Vec<f64>,
    /// Pairs with positive local-time increment, lexicographic.
    pub pairs: Vec<PairIncrement>,
    pub sweeps: usize,
}

impl StepLedger {
    pub fn dphi_norm(&self) -> f64 {
        self.dphi.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `sum_pairs` of the recorded pair vectors spread back onto balls.
    pub fn reflection_sum(&self, n_balls: usize, dim: usize, mobile: Option<&[bool]>) -> Vec<f64> {
        let mut out = vec![0.0; n_balls * dim];
        let w = |b: usize| mobile.map_or(1.0, |m| if m[b] { 1.0 } else { 0.0 });
        for p in &self.pairs {
            for a in 0..dim {
                out[p.j * dim + a] += w(p.j) * p.vector[a];
                out[p.k * dim + a] -= w(p.k) * p.vector[a];
            }
        }
        out
    }
}

/// Cumulative reflection record of a path.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionLedger {
    n_balls: usize,
    dim: usize,
    steps: Vec<StepLedger>,
    local_times: BTreeMap<(usize, usize), f64>,
    /// `||phi||` after each step.
    variation: Vec<f64>,
    ball_variation: Vec<f64>,
}

impl ReflectionLedger {
    pub fn new(n_balls: usize, dim: usize) -> Self {
        Self {
            n_balls,
            dim,
            steps: Vec::new(),
            local_times: BTreeMap::new(),
            variation: Vec::new(),
            ball_variation: vec![0.0; n_balls],
        }
    }

    pub fn push(&mut self, step: StepLedger) {
        let prev = self.variation.last().copied().unwrap_or(0.0);
        self.variation.push(prev + step.dphi_norm());
        for (b, v) in self.ball_variation.iter_mut().enumerate() {
            let block = &step.dphi[b * self.dim..(b + 1) * self.dim];
            *v += block.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        for p in &step.pairs {
            *self.local_times.entry((p.j, p.k)).or_insert(0.0) += p.dl;
        }
        self.steps.push(step);
    }

    pub fn n_balls(&self) -> usize {
        self.n_balls
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[StepLedger] {
        &self.steps
    }

    /// `L^{jk}` at the end of the path; symmetric in its arguments.
    pub fn local_time(&self, j: usize, k: usize) -> f64 {
        let key = if j < k { (j, k) } else { (k, j) };
        self.local_times.get(&key).copied().unwrap_or(0.0)
    }

    pub fn local_times(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.local_times
    }

    /// `||phi||_T`
    pub fn total_variation(&self) -> f64 {
        self.variation.last().copied().unwrap_or(0.0)
    }

    /// `||phi||` after `step` steps (0 for `step == 0`).
    pub fn variation_at(&self, step: usize) -> f64 {
        if step == 0 {
            0.0
        } else {
            self.variation[step - 1]
        }
    }

    pub fn ball_variation(&self) -> &[f64] {
        &self.ball_variation
    }

    /// First step with a positive local-time increment.
    pub fn first_contact_step(&self) -> Option<usize> {
        self.steps.iter().position(|s| !s.pairs.is_empty())
    }
}

struct ActivePair {
    dl: f64,
    vector: Vec<f64>,
}

/// Advances `config` by one driving segment and reflects back into the
/// hard-core domain. `mobile`, when given, marks which balls may move; frozen
/// balls act as fixed obstacles and must carry zero displacement.
pub fn solve_step_with(
    config: &BallConfiguration,
    seg: &DrivingSegment,
    settings: &ProjectionSettings,
    mobile: Option<&[bool]>,
) -> Result<(BallConfiguration, StepLedger)> {
    let n = config.n_balls();
    let d = config.dim();
    if seg.displacement.len() != n * d {
        return Err(Error::Input(format!(
            "displacement has {} entries, configuration needs {}",
            seg.displacement.len(),
            n * d
        )));
    }
    if let Some(i) = seg.displacement.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite displacement entry {i}")));
    }
    if let Some(m) = mobile {
        if m.len() != n {
            return Err(Error::Input("mobility mask length mismatch".into()));
        }
    }
    let r = config.radius();
    let boundary = config.boundary();
    let tol_abs = settings.tol_proj * r;
    let weight = |b: usize| mobile.map_or(1.0, |m| if m[b] { 1.0 } else { 0.0 });

    let free_move: Vec<f64> = config.positions().iter().zip(&seg.displacement).map(|(x, w)| x + w).collect();
    let mut pos = free_move.clone();
    let mut active: BTreeMap<(usize, usize), ActivePair> = BTreeMap::new();
    let mut cur = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut delta = vec![0.0; d];

    let mut sweeps = 0;
    let mut worst;
    loop {
        if sweeps >= settings.max_iter {
            worst = worst_violation(&pos, n, d, r, boundary);
            return Err(Error::Convergence { iterations: sweeps, worst_residual: worst });
        }
        sweeps += 1;
        worst = 0.0f64;
        for j in 0..n {
            for k in j + 1..n {
                let wsum = weight(j) + weight(k);
                if wsum == 0.0 {
                    continue;
                }
                let dist = boundary.separation(&pos[j * d..(j + 1) * d], &pos[k * d..(k + 1) * d], &mut cur);
                let entry = active.get(&(j, k));
                if entry.is_none() && dist >= r {
                    continue;
                }
                let old = entry.map(|e| e.vector.as_slice());
                for a in 0..d {
                    b[a] = cur[a] - wsum * old.map_or(0.0, |v| v[a]);
                }
                let blen = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dl = if blen < r { (1.0 - blen / r) / wsum } else { 0.0 };
                let mut new_vec = vec![0.0; d];
                if dl > 0.0 {
                    if blen > 0.0 {
                        let s = r * dl / blen;
                        for a in 0..d {
                            new_vec[a] = s * b[a];
                        }
                    } else {
                        // coincident centres: fall back to the current axis, or the first coordinate axis
                        let clen = dist;
                        if clen > 0.0 {
                            for a in 0..d {
                                new_vec[a] = r * dl * cur[a] / clen;
                            }
                        } else {
                            new_vec[0] = r * dl;
                        }
                    }
                }
                let mut change = 0.0f64;
                for a in 0..d {
                    delta[a] = new_vec[a] - old.map_or(0.0, |v| v[a]);
                    change = change.max(delta[a].abs());
                }
                let (wj, wk) = (weight(j), weight(k));
                for a in 0..d {
                    pos[j * d + a] += wj * delta[a];
                    pos[k * d + a] -= wk * delta[a];
                }
                worst = worst.max(change);
                if dl > 0.0 {
                    active.insert((j, k), ActivePair { dl, vector: new_vec });
                } else {
                    active.remove(&(j, k));
                }
            }
        }
        // small updates can still leave a residual overlap where several pairs share a ball
        if worst <= tol_abs && worst_violation(&pos, n, d, r, boundary) <= tol_abs {
            break;
        }
    }

    let dphi: Vec<f64> = pos.iter().zip(&free_move).map(|(p, f)| p - f).collect();
    let pairs = active.into_iter().map(|((j, k), e)| PairIncrement { j, k, dl: e.dl, vector: e.vector }).collect();
    let out = config.with_positions(pos)?;
    Ok((out, StepLedger { dphi, pairs, sweeps }))
}

/// [`solve_step_with`] with every ball mobile.
pub fn solve_step(
    config: &BallConfiguration,
    seg: &DrivingSegment,
    settings: &ProjectionSettings,
) -> Result<(BallConfiguration, StepLedger)> {
    solve_step_with(config, seg, settings, None)
}

fn worst_violation(pos: &[f64], n: usize, d: usize, r: f64, boundary: crate::geometry::Boundary) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in j + 1..n {
            let dist = boundary.distance(&pos[j * d..(j + 1) * d], &pos[k * d..(k + 1) * d]);
            worst = worst.max(r - dist);
        }
    }
    worst
}

/// Solves the discrete Skorohod problem along a sequence of driving segments.
pub fn solve_path(
    x0: &BallConfiguration,
    path: &[DrivingSegment],
    settings: &ProjectionSettings,
) -> Result<(Trajectory, ReflectionLedger)> {
    if !validate(x0, settings.tol_hc * x0.radius())? {
        return Err(Error::Input("initial configuration violates the hard core".into()));
    }
    let mut traj = Trajectory::starting_at(x0, 0.0);
    let mut ledger = ReflectionLedger::new(x0.n_balls(), x0.dim());
    let mut cur = x0.clone();
    let mut t = 0.0;
    for seg in path {
        let (next, step) = solve_step(&cur, seg, settings)?;
        t += seg.dt;
        traj.push(t, next.positions());
        ledger.push(step);
        cur = next;
    }
    Ok((traj, ledger))
}

/// Cumulative driving path `w(t_k) = sum_{i<k} displacement_i`, one entry per grid time.
pub fn cumulative_driving(path: &[DrivingSegment], width: usize) -> Vec<Vec<f64>> {
    let mut acc = vec![0.0; width];
    let mut out = Vec::with_capacity(path.len() + 1);
    out.push(acc.clone());
    for seg in path {
        for (a, v) in acc.iter_mut().zip(&seg.displacement) {
            *a += v;
        }
        out.push(acc.clone());
    }
    out
}

/// Outcome of comparing two reflected paths against the contraction envelope
/// `|z1 - z2|(t) <= (||w1 - w2||_t + |x1 - x2|) exp(C (||phi1||_t + ||phi2||_t))`.
#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `max_t lhs / rhs` (0 when both vanish).
    pub max_ratio: f64,
    pub pass: bool,
}

/// Absolute allowance for rounding when comparing envelopes built from separately
/// accumulated sums; scales with the coordinate magnitude.
fn rounding_slack(scale: f64) -> f64 {
    1e-12 * (1.0 + scale)
}

struct EnvelopeTerms {
    lhs: Vec<f64>,
    base: Vec<f64>,
    variation: Vec<f64>,
    scale: Vec<f64>,
}

fn envelope_terms(
    sol1: (&Trajectory, &ReflectionLedger),
    sol2: (&Trajectory, &ReflectionLedger),
    w1: &[DrivingSegment],
    w2: &[DrivingSegment],
) -> Result<EnvelopeTerms> {
    let (t1, l1) = sol1;
    let (t2, l2) = sol2;
    let frames = t1.n_frames();
    if t2.n_frames() != frames || w1.len() + 1 != frames || w2.len() + 1 != frames {
        return Err(Error::Input("solutions and driving paths are not on the same grid".into()));
    }
    if t1.times().iter().zip(t2.times()).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Input("solutions use different time grids".into()));
    }
    let width = t1.frame(0).len();
    let cw1 = cumulative_driving(w1, width);
    let cw2 = cumulative_driving(w2, width);
    let norm = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let x_gap = norm(t1.frame(0), t2.frame(0));
    let mut sup_w = 0.0f64;
    let mut terms = EnvelopeTerms { lhs: vec![], base: vec![], variation: vec![], scale: vec![] };
    for k in 0..frames {
        sup_w = sup_w.max(norm(&cw1[k], &cw2[k]));
        terms.lhs.push(norm(t1.frame(k), t2.frame(k)));
        terms.base.push(sup_w + x_gap);
        terms.variation.push(l1.variation_at(k) + l2.variation_at(k));
        let s = t1.frame(k).iter().chain(t2.frame(k)).fold(0.0f64, |m, v| m.max(v.abs()));
        terms.scale.push(s);
    }
    Ok(terms)
}

/// Evaluates the contraction envelope at every grid time for a given `C`.
pub fn contraction_check(
    sol1: (&Trajectory, &ReflectionLedger),
    sol2: (&Trajectory, &ReflectionLedger),
    w1: &[DrivingSegment],
    w2: &[DrivingSegment],
    c: f64,
) -> Result<ContractionReport> {
    let terms = envelope_terms(sol1, sol2, w1, w2)?;
    let mut rhs = Vec::with_capacity(terms.lhs.len());
    let mut max_ratio = 0.0f64;
    let mut pass = true;
    for k in 0..terms.lhs.len() {
        let bound = terms.base[k] * (c * terms.variation[k]).exp();
        if terms.lhs[k] > bound + rounding_slack(terms.scale[k]) {
            pass = false;
        }
        if terms.lhs[k] > 0.0 {
            max_ratio = max_ratio.max(if bound > 0.0 { terms.lhs[k] / bound } else { f64::INFINITY });
        }
        rhs.push(bound);
    }
    Ok(ContractionReport { lhs: terms.lhs, rhs, max_ratio, pass })
}

/// Smallest `C >= 0` for which [`contraction_check`] passes, or `None` if the
/// envelope fails at a time where neither path has reflected yet.
pub fn fit_contraction_constant(
    sol1: (&Trajectory, &ReflectionLedger),
    sol2: (&Trajectory, &ReflectionLedger),
    w1: &[DrivingSegment],
    w2: &[DrivingSegment],
) -> Result<Option<f64>> {
    let terms = envelope_terms(sol1, sol2, w1, w2)?;
    let mut c = 0.0f64;
    for k in 0..terms.lhs.len() {
        let slack = rounding_slack(terms.scale[k]);
        if terms.lhs[k] <= terms.base[k] + slack {
            continue;
        }
        if terms.variation[k] <= 0.0 || terms.base[k] <= 0.0 {
            return Ok(None);
        }
        let need = ((terms.lhs[k] - slack) / terms.base[k]).ln() / terms.variation[k];
        c = c.max(need);
    }
    // nudge past the rounding of exp/ln
    Ok(Some(c * (1.0 + 1e-12)))
}
