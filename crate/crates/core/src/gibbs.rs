//! Canonical Gibbs sampling in a periodic box and a before/after test of
//! equilibrium preservation under the dynamics.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geometry::{validate, BallConfiguration, Boundary};
use crate::integrator::simulate_ske_n;
use crate::noise::DyadicBrownianPath;
use crate::potentials::{one_ball_energy, FreePotential, PairPotential, Potentials};

pub const RDF_BINS: usize = 20;
pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct GibbsSamplerConfig {
    pub dim: usize,
    pub radius: f64,
    pub box_side: f64,
    pub n_balls: usize,
    pub pair: PairPotential,
    pub free: FreePotential,
    pub sweeps: usize,
    /// Half-width of the uniform single-ball proposal cube.
    pub proposal_scale: f64,
    pub seed: u64,
}

impl GibbsSamplerConfig {
    pub fn hard_core(dim: usize, radius: f64, box_side: f64, n_balls: usize, sweeps: usize, seed: u64) -> Self {
        Self {
            dim,
            radius,
            box_side,
            n_balls,
            pair: PairPotential::hard_core_only(),
            free: FreePotential::Zero,
            sweeps,
            proposal_scale: 0.5 * radius,
            seed,
        }
    }

    pub fn potentials(&self) -> Potentials {
        Potentials::new(self.pair.clone(), self.free.clone())
    }

    pub fn burn_in(&self) -> usize {
        self.sweeps / 2
    }
}

/// Box side giving packing fraction `phi` for `n` balls of diameter `r`.
pub fn box_side_for_packing(n: usize, dim: usize, radius: f64, phi: f64) -> f64 {
    let half = 0.5 * radius;
    let unit = std::f64::consts::PI.powf(dim as f64 / 2.0) / statrs::function::gamma::gamma(dim as f64 / 2.0 + 1.0);
    (n as f64 * unit * half.powi(dim as i32) / phi).powf(1.0 / dim as f64)
}

/// Simple cubic lattice with `ceil(n^(1/d))` sites per side, filled in index order.
pub fn lattice_placement(dim: usize, radius: f64, box_side: f64, n_balls: usize) -> Result<BallConfiguration> {
    if n_balls == 0 {
        return Err(Error::Input("need at least one ball".into()));
    }
    let mut per_side = (n_balls as f64).powf(1.0 / dim as f64).round() as usize;
    while per_side.pow(dim as u32) < n_balls {
        per_side += 1;
    }
    let spacing = box_side / per_side as f64;
    if spacing < radius || box_side <= 2.0 * radius {
        return Err(Error::Input(format!(
            "{n_balls} balls of diameter {radius} do not fit on a lattice in a box of side {box_side}"
        )));
    }
    let mut pos = Vec::with_capacity(n_balls * dim);
    for i in 0..n_balls {
        let mut rest = i;
        for _ in 0..dim {
            pos.push((rest % per_side) as f64 * spacing + 0.5 * spacing);
            rest /= per_side;
        }
    }
    BallConfiguration::new(dim, radius, pos, Boundary::Periodic(box_side))
}

/// Metropolis acceptance `min(1, e^{-dE})`; infinite increases are never accepted.
pub fn acceptance_probability(delta_e: f64) -> f64 {
    if delta_e.is_nan() || delta_e == f64::INFINITY {
        0.0
    } else if delta_e <= 0.0 {
        1.0
    } else {
        (-delta_e).exp()
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Independent child seed for `(tag, index)`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

#[derive(Clone, Debug)]
pub struct GibbsChain {
    pub final_state: BallConfiguration,
    pub samples: Vec<BallConfiguration>,
    pub acceptance_rate: f64,
    pub burn_in: usize,
}

/// Runs the chain and keeps the state after every `thin`-th sweep past burn-in.
pub fn gibbs_chain(cfg: &GibbsSamplerConfig, thin: usize) -> Result<GibbsChain> {
    if !(cfg.proposal_scale > 0.0) || thin == 0 {
        return Err(Error::Input("proposal scale and thinning must be positive".into()));
    }
    let pots = cfg.potentials();
    let side = cfg.box_side;
    let d = cfg.dim;
    let mut x = lattice_placement(d, cfg.radius, side, cfg.n_balls)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut accepted = 0usize;
    let mut samples = Vec::new();
    let mut old = vec![0.0; d];
    for sweep in 0..cfg.sweeps {
        for j in 0..cfg.n_balls {
            old.copy_from_slice(x.position(j));
            let e_old = one_ball_energy(&x, j, &pots);
            for a in 0..d {
                let step = (2.0 * uniform(&mut rng) - 1.0) * cfg.proposal_scale;
                x.position_mut(j)[a] = (old[a] + step).rem_euclid(side);
            }
            let e_new = one_ball_energy(&x, j, &pots);
            let p = acceptance_probability(e_new - e_old);
            if uniform(&mut rng) < p {
                accepted += 1;
            } else {
                x.position_mut(j).copy_from_slice(&old);
            }
        }
        if sweep >= cfg.burn_in() && (sweep - cfg.burn_in() + 1).is_multiple_of(thin) {
            samples.push(x.clone());
        }
    }
    let moves = (cfg.sweeps * cfg.n_balls).max(1);
    Ok(GibbsChain { final_state: x, samples, acceptance_rate: accepted as f64 / moves as f64, burn_in: cfg.burn_in() })
}

/// Configuration after all sweeps.
pub fn gibbs_sample(cfg: &GibbsSamplerConfig) -> Result<BallConfiguration> {
    let x = gibbs_chain(cfg, usize::MAX)?.final_state;
    debug_assert!(validate(&x, 0.0).unwrap_or(false));
    Ok(x)
}

#[derive(Clone, Debug, Serialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub before: u64,
    pub after: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaStart {
    Gibbs,
    Lattice,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReversibilityReport {
    pub replicas: usize,
    pub level: u32,
    pub horizon: f64,
    pub start: ReplicaStart,
    pub bins: Vec<HistogramBin>,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub pass: bool,
    pub burn_in_sweeps: usize,
    pub min_pair_distance_after: f64,
}

/// Pair distances in `[r, 4r)` sorted into `RDF_BINS` equal bins.
pub fn rdf_histogram(config: &BallConfiguration, counts: &mut [u64]) {
    let r = config.radius();
    let width = 3.0 * r / counts.len() as f64;
    for j in 0..config.n_balls() {
        for k in j + 1..config.n_balls() {
            let rho = config.distance(j, k);
            // contacts resolved to within the solver tolerance land in the first bin
            if rho >= r * (1.0 - 1e-7) && rho < 4.0 * r {
                let b = (((rho - r).max(0.0) / width) as usize).min(counts.len() - 1);
                counts[b] += 1;
            }
        }
    }
}

/// Two-sample chi-square on histograms with possibly different totals.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    let sa: f64 = a.iter().sum::<u64>() as f64;
    let sb: f64 = b.iter().sum::<u64>() as f64;
    if sa == 0.0 || sb == 0.0 {
        return (0.0, 0, 1.0);
    }
    let ra = (sb / sa).sqrt();
    let rb = (sa / sb).sqrt();
    let mut stat = 0.0;
    let mut used = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        used += 1;
        let diff = ra * x as f64 - rb * y as f64;
        stat += diff * diff / (x + y) as f64;
    }
    let df = used.saturating_sub(1);
    let p = if df == 0 { 1.0 } else { ChiSquared::new(df as f64).map(|c| c.sf(stat)).unwrap_or(f64::NAN) };
    (stat, df, p)
}

pub fn reversibility_test(
    cfg: &GibbsSamplerConfig,
    level: u32,
    horizon: f64,
    replicas: usize,
    start: ReplicaStart,
) -> Result<ReversibilityReport> {
    if replicas == 0 {
        return Err(Error::Input("need at least one replica".into()));
    }
    if !(horizon >= 0.0) {
        return Err(Error::Input(format!("horizon must be non-negative, got {horizon}")));
    }
    let pots = cfg.potentials();
    let runs: Vec<(BallConfiguration, BallConfiguration)> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let x0 = match start {
                ReplicaStart::Gibbs => {
                    let mut c = cfg.clone();
                    c.seed = derive_seed(cfg.seed, 0, i as u64);
                    gibbs_sample(&c)?
                }
                ReplicaStart::Lattice => lattice_placement(cfg.dim, cfg.radius, cfg.box_side, cfg.n_balls)?,
            };
            if horizon == 0.0 {
                return Ok((x0.clone(), x0));
            }
            let path =
                DyadicBrownianPath::sample(derive_seed(cfg.seed, 1, i as u64), level, horizon, cfg.n_balls, cfg.dim)?;
            let sim = simulate_ske_n(&x0, &pots, &path)?;
            Ok((x0, sim.trajectory.final_config()))
        })
        .collect::<Result<_>>()?;

    let mut before = vec![0u64; RDF_BINS];
    let mut after = vec![0u64; RDF_BINS];
    let mut min_after = f64::INFINITY;
    for (x0, x1) in &runs {
        rdf_histogram(x0, &mut before);
        rdf_histogram(x1, &mut after);
        if let Some((_, _, m)) = x1.min_pair_distance() {
            min_after = min_after.min(m);
        }
    }
    let (chi_square, degrees_of_freedom, p_value) = chi_square_two_sample(&before, &after);
    let width = 3.0 * cfg.radius / RDF_BINS as f64;
    let bins = (0..RDF_BINS)
        .map(|b| HistogramBin {
            left: cfg.radius + b as f64 * width,
            right: cfg.radius + (b + 1) as f64 * width,
            before: before[b],
            after: after[b],
        })
        .collect();
    Ok(ReversibilityReport {
        replicas,
        level,
        horizon,
        start,
        bins,
        chi_square,
        degrees_of_freedom,
        p_value,
        pass: p_value > SIGNIFICANCE,
        burn_in_sweeps: cfg.burn_in(),
        min_pair_distance_after: min_after,
    })
}
