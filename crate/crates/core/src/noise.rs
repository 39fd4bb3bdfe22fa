//! Dyadic Brownian driving noise with exact bridge refinement.
//!
//! Every ball and coordinate owns an independent ChaCha8 stream keyed by
//! `(seed, ball, coordinate, level)`. The unit-time skeleton comes from level 0;
//! level `m` inserts Brownian-bridge midpoints drawn from its own stream, so a
//! path at level `n` is a deterministic function of its arguments, refining it
//! never consumes a different stream, and adding balls never perturbs existing ones.
//!
//! Path values are snapped to a lattice of spacing 2^-44. Differences of
//! lattice values below 2^8 in magnitude are exact in `f64`, which makes
//! "the two fine increments sum to the coarse increment" hold bit-for-bit.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

const QUANTUM: f64 = 1.0 / (1u64 << 44) as f64;
const MAX_LEVEL: u32 = 40;
const MAX_HORIZON: f64 = 1024.0;

#[inline]
fn snap(v: f64) -> f64 {
    (v / QUANTUM).round() * QUANTUM
}

/// Standard normal stream for one `(ball, coordinate, level)`.
struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    fn new(seed: u64, ball: usize, coord: usize, level: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stream = ((ball as u64) << 24) | ((coord as u64 & 0xffff) << 8) | (level as u64 & 0xff);
        rng.set_stream(stream);
        rng.set_word_pos(0);
        Self { rng }
    }

    /// Box-Muller, one variate per two 64-bit words.
    #[inline]
    fn next(&mut self) -> f64 {
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Brownian motion in `(R^d)^n` sampled on the grid `k 2^-level`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicBrownianPath {
    seed: u64,
    level: u32,
    n_steps: usize,
    n_balls: usize,
    dim: usize,
    /// `values[(k * n_balls + j) * dim + a]` = `B^j_a(k 2^-level)`
    values: Vec<f64>,
}

impl DyadicBrownianPath {
    /// Path at level `level` covering `[0, horizon]` (rounded up to the grid).
    pub fn sample(seed: u64, level: u32, horizon: f64, n_balls: usize, dim: usize) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::Input(format!("level {level} exceeds the supported maximum {MAX_LEVEL}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
        }
        if horizon > MAX_HORIZON {
            return Err(Error::Input(format!("horizon {horizon} exceeds {MAX_HORIZON}")));
        }
        if dim == 0 || dim > 0xffff {
            return Err(Error::Input(format!("unsupported dimension {dim}")));
        }
        let scale = (1u64 << level) as f64;
        let n_steps = (horizon * scale - 1e-9).ceil().max(1.0);
        if n_steps > (1u64 << 40) as f64 {
            return Err(Error::Input(format!("{n_steps} steps overflow the grid")));
        }
        let n_steps = n_steps as usize;
        let units = (n_steps + (1usize << level) - 1) >> level;

        let mut path = Self::level_zero(seed, units, n_balls, dim);
        for _ in 0..level {
            path = path.refine();
        }
        path.truncate(n_steps);
        Ok(path)
    }

    fn level_zero(seed: u64, units: usize, n_balls: usize, dim: usize) -> Self {
        let stride = n_balls * dim;
        let mut values = vec![0.0; (units + 1) * stride];
        for j in 0..n_balls {
            for a in 0..dim {
                let mut s = NormalStream::new(seed, j, a, 0);
                let mut w = 0.0;
                for k in 1..=units {
                    w = snap(w + s.next());
                    values[k * stride + j * dim + a] = w;
                }
            }
        }
        Self { seed, level: 0, n_steps: units, n_balls, dim, values }
    }

    fn truncate(&mut self, n_steps: usize) {
        self.values.truncate((n_steps + 1) * self.n_balls * self.dim);
        self.n_steps = n_steps;
    }

    /// Same Brownian path at level `level + 1`: every coarse step is split at
    /// its midpoint by a bridge draw with variance `2^-(level+2)`.
    pub fn refine(&self) -> Self {
        let stride = self.n_balls * self.dim;
        let fine_steps = 2 * self.n_steps;
        let mut values = vec![0.0; (fine_steps + 1) * stride];
        for k in 0..=self.n_steps {
            values[2 * k * stride..(2 * k + 1) * stride].copy_from_slice(&self.values[k * stride..(k + 1) * stride]);
        }
        let sd = (self.step() / 4.0).sqrt();
        for j in 0..self.n_balls {
            for a in 0..self.dim {
                let mut s = NormalStream::new(self.seed, j, a, self.level + 1);
                let idx = |k: usize| k * stride + j * self.dim + a;
                for k in 0..self.n_steps {
                    let left = self.values[idx(k)];
                    let right = self.values[idx(k + 1)];
                    values[idx(2 * k + 1)] = snap(0.5 * (left + right) + sd * s.next());
                }
            }
        }
        Self {
            seed: self.seed,
            level: self.level + 1,
            n_steps: fine_steps,
            n_balls: self.n_balls,
            dim: self.dim,
            values,
        }
    }

    /// Coarse path at `level - 1`, obtained by keeping every other grid value.
    pub fn aggregate(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(Error::Input("level 0 has no coarser path".into()));
        }
        let stride = self.n_balls * self.dim;
        let coarse_steps = self.n_steps / 2;
        let mut values = Vec::with_capacity((coarse_steps + 1) * stride);
        for k in 0..=coarse_steps {
            values.extend_from_slice(&self.values[2 * k * stride..(2 * k + 1) * stride]);
        }
        Ok(Self {
            seed: self.seed,
            level: self.level - 1,
            n_steps: coarse_steps,
            n_balls: self.n_balls,
            dim: self.dim,
            values,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_balls(&self) -> usize {
        self.n_balls
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Step size `2^-level`.
    pub fn step(&self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    /// `n_steps * 2^-level`
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.step()
    }

    /// `B^ball(k 2^-level)`
    pub fn value(&self, k: usize, ball: usize) -> &[f64] {
        let i = (k * self.n_balls + ball) * self.dim;
        &self.values[i..i + self.dim]
    }

    /// All balls at grid time `k`, ball-major.
    pub fn frame(&self, k: usize) -> &[f64] {
        let stride = self.n_balls * self.dim;
        &self.values[k * stride..(k + 1) * stride]
    }

    /// Increment of `ball` over step `k`, i.e. `B(t_{k+1}) - B(t_k)`.
    #[inline]
    pub fn increment_into(&self, k: usize, ball: usize, out: &mut [f64]) {
        let stride = self.n_balls * self.dim;
        let lo = k * stride + ball * self.dim;
        let hi = lo + stride;
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.values[hi + a] - self.values[lo + a];
        }
    }

    pub fn increment(&self, k: usize, ball: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.increment_into(k, ball, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_arguments_same_path() {
        let a = DyadicBrownianPath::sample(7, 6, 1.0, 3, 2).unwrap();
        let b = DyadicBrownianPath::sample(7, 6, 1.0, 3, 2).unwrap();
        assert_eq!(a, b);
        let c = DyadicBrownianPath::sample(8, 6, 1.0, 3, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn refine_then_aggregate_is_identity() {
        let p = DyadicBrownianPath::sample(3, 5, 2.0, 2, 3).unwrap();
        let back = p.refine().aggregate().unwrap();
        assert_eq!(p, back);
        let fine = p.refine();
        for k in 0..p.n_steps() {
            for j in 0..2 {
                let coarse = p.increment(k, j);
                let f0 = fine.increment(2 * k, j);
                let f1 = fine.increment(2 * k + 1, j);
                for a in 0..3 {
                    assert_eq!(f0[a] + f1[a], coarse[a]);
                }
            }
        }
    }

    #[test]
    fn refinement_is_call_order_independent() {
        let direct = DyadicBrownianPath::sample(11, 7, 1.0, 2, 2).unwrap();
        let twice = DyadicBrownianPath::sample(11, 5, 1.0, 2, 2).unwrap().refine().refine();
        assert_eq!(direct, twice);
    }

    #[test]
    fn streams_are_keyed_by_ball() {
        let small = DyadicBrownianPath::sample(5, 6, 1.0, 2, 2).unwrap();
        let large = DyadicBrownianPath::sample(5, 6, 1.0, 9, 2).unwrap();
        for k in 0..=small.n_steps() {
            assert_eq!(small.value(k, 0), large.value(k, 0));
            assert_eq!(small.value(k, 1), large.value(k, 1));
        }
    }

    #[test]
    fn horizon_rounds_up_to_grid() {
        let p = DyadicBrownianPath::sample(0, 3, 0.3, 1, 1).unwrap();
        assert_eq!(p.n_steps(), 3);
        assert_eq!(p.horizon(), 0.375);
        assert!(DyadicBrownianPath::sample(0, 41, 1.0, 1, 1).is_err());
        assert!(DyadicBrownianPath::sample(0, 3, -1.0, 1, 1).is_err());
    }
}
