//! Free and pair potentials, the drift field, Ruelle-class shell
//! certificates and the global Lipschitz constant of the drift.
//!
//! A pair potential is radial, `Psi(z) = beta * psi(|z|)`, optionally cut at
//! `R_c` (force truncation, no shift). The drift acting on ball `x` is
//! `b(x) = -1/2 grad Phi(x) - 1/2 sum_y grad Psi(x - y)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{BallConfiguration, Boundary};

/// Radial profile `psi(rho)` with its first two derivatives.
pub trait RadialProfile: Send + Sync {
    fn value(&self, rho: f64) -> f64;
    fn derivative(&self, rho: f64) -> f64;
    fn second_derivative(&self, rho: f64) -> f64;

    /// Exponent `p` with `|psi'(rho)| = O(rho^-p)`; `psi''` is assumed to decay one power faster.
    fn decay_exponent(&self) -> f64;

    /// Constants `(C_g, C_h)` with `|psi'(rho)| <= C_g rho^-p` and
    /// `max(|psi''|, |psi'|/rho) <= C_h rho^-(p+1)` for all `rho >= rho0`.
    ///
    /// The default estimates the suprema on a geometric grid.
    fn tail_constants(&self, rho0: f64) -> (f64, f64) {
        let p = self.decay_exponent();
        let mut cg: f64 = 0.0;
        let mut ch: f64 = 0.0;
        let mut rho = rho0;
        for _ in 0..2000 {
            let d1 = self.derivative(rho).abs();
            let d2 = self.second_derivative(rho).abs().max(d1 / rho);
            cg = cg.max(d1 * rho.powf(p));
            ch = ch.max(d2 * rho.powf(p + 1.0));
            rho *= 1.01;
        }
        (cg * 1.01, ch * 1.01)
    }
}

#[derive(Clone)]
pub enum PairKind {
    /// Hard core only, `Psi_sm = 0`.
    HardCoreOnly,
    /// `psi(rho) = rho^-12 - rho^-6`
    LennardJones,
    /// `psi(rho) = rho^-a / a`
    Riesz {
        a: f64,
    },
    Custom(Arc<dyn RadialProfile>),
}

impl fmt::Debug for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairKind::HardCoreOnly => f.write_str("HardCoreOnly"),
            PairKind::LennardJones => f.write_str("LennardJones"),
            PairKind::Riesz { a } => write!(f, "Riesz {{ a: {a} }}"),
            PairKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl PairKind {
    #[inline]
    fn psi(&self, rho: f64) -> f64 {
        match self {
            PairKind::HardCoreOnly => 0.0,
            PairKind::LennardJones => {
                let s6 = rho.powi(-6);
                s6 * s6 - s6
            }
            PairKind::Riesz { a } => rho.powf(-a) / a,
            PairKind::Custom(p) => p.value(rho),
        }
    }

    #[inline]
    fn dpsi(&self, rho: f64) -> f64 {
        match self {
            PairKind::HardCoreOnly => 0.0,
            PairKind::LennardJones => -12.0 * rho.powi(-13) + 6.0 * rho.powi(-7),
            PairKind::Riesz { a } => -rho.powf(-a - 1.0),
            PairKind::Custom(p) => p.derivative(rho),
        }
    }

    #[inline]
    fn d2psi(&self, rho: f64) -> f64 {
        match self {
            PairKind::HardCoreOnly => 0.0,
            PairKind::LennardJones => 156.0 * rho.powi(-14) - 42.0 * rho.powi(-8),
            PairKind::Riesz { a } => (a + 1.0) * rho.powf(-a - 2.0),
            PairKind::Custom(p) => p.second_derivative(rho),
        }
    }

    /// Decay exponent of `|psi'|`; `None` when `psi' = 0`.
    fn decay_exponent(&self) -> Option<f64> {
        match self {
            PairKind::HardCoreOnly => None,
            PairKind::LennardJones => Some(7.0),
            PairKind::Riesz { a } => Some(a + 1.0),
            PairKind::Custom(p) => Some(p.decay_exponent()),
        }
    }

    fn tail_constants(&self, rho0: f64) -> (f64, f64) {
        match self {
            PairKind::HardCoreOnly => (0.0, 0.0),
            PairKind::LennardJones => {
                let s = rho0.powi(-6);
                (12.0 * s + 6.0, 156.0 * s + 42.0)
            }
            PairKind::Riesz { a } => (1.0, a + 1.0),
            PairKind::Custom(p) => p.tail_constants(rho0),
        }
    }
}

/// `Psi_sm = beta * psi`, cut at `cutoff` when set.
#[derive(Clone, Debug)]
pub struct PairPotential {
    pub kind: PairKind,
    pub beta: f64,
    pub cutoff: Option<f64>,
}

impl PairPotential {
    pub fn hard_core_only() -> Self {
        Self { kind: PairKind::HardCoreOnly, beta: 1.0, cutoff: None }
    }

    pub fn lennard_jones(beta: f64, cutoff: Option<f64>) -> Result<Self> {
        Self::checked(PairKind::LennardJones, beta, cutoff)
    }

    /// Riesz potential with exponent `a`. Whether `a > d` holds is checked by
    /// [`ruelle_check`], which needs the dimension.
    pub fn riesz(a: f64, beta: f64, cutoff: Option<f64>) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Input(format!("Riesz exponent must be positive, got {a}")));
        }
        Self::checked(PairKind::Riesz { a }, beta, cutoff)
    }

    pub fn custom(profile: Arc<dyn RadialProfile>, beta: f64, cutoff: Option<f64>) -> Result<Self> {
        Self::checked(PairKind::Custom(profile), beta, cutoff)
    }

    fn checked(kind: PairKind, beta: f64, cutoff: Option<f64>) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Input(format!("inverse temperature must be positive, got {beta}")));
        }
        if let Some(rc) = cutoff {
            if !(rc.is_finite() && rc > 0.0) {
                return Err(Error::Input(format!("cutoff must be positive, got {rc}")));
            }
        }
        Ok(Self { kind, beta, cutoff })
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PairKind::HardCoreOnly)
    }

    #[inline]
    fn within_cutoff(&self, rho: f64) -> bool {
        self.cutoff.is_none_or(|rc| rho <= rc)
    }

    /// `Psi_sm(rho)`; zero beyond the cutoff.
    #[inline]
    pub fn energy(&self, rho: f64) -> f64 {
        if self.within_cutoff(rho) {
            self.beta * self.kind.psi(rho)
        } else {
            0.0
        }
    }

    /// `Psi_sm'(rho)`; zero beyond the cutoff.
    #[inline]
    pub fn energy_derivative(&self, rho: f64) -> f64 {
        if self.within_cutoff(rho) {
            self.beta * self.kind.dpsi(rho)
        } else {
            0.0
        }
    }

    /// Operator norm of the Hessian of the uncut `Psi_sm` at distance `rho`:
    /// `beta * max(|psi''|, |psi'| / rho)` (radial and tangential eigenvalues).
    #[inline]
    pub fn hessian_norm(&self, rho: f64) -> f64 {
        let d1 = self.kind.dpsi(rho).abs() / rho;
        let d2 = self.kind.d2psi(rho).abs();
        self.beta * d1.max(d2)
    }

    #[inline]
    fn uncut_gradient_norm(&self, rho: f64) -> f64 {
        self.beta * self.kind.dpsi(rho).abs()
    }
}

/// Smooth one-body field `Phi` with a global bound on its Hessian norm.
pub trait SmoothField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian_bound(&self) -> f64;
}

#[derive(Clone, Default)]
pub enum FreePotential {
    #[default]
    Zero,
    /// `Phi(x) = stiffness |x|^2 / 2`
    Harmonic {
        stiffness: f64,
    },
    Custom(Arc<dyn SmoothField>),
}

impl fmt::Debug for FreePotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreePotential::Zero => f.write_str("Zero"),
            FreePotential::Harmonic { stiffness } => write!(f, "Harmonic {{ stiffness: {stiffness} }}"),
            FreePotential::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl FreePotential {
    #[inline]
    pub fn is_zero(&self) -> bool {
        matches!(self, FreePotential::Zero)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            FreePotential::Zero => 0.0,
            FreePotential::Harmonic { stiffness } => 0.5 * stiffness * x.iter().map(|v| v * v).sum::<f64>(),
            FreePotential::Custom(f) => f.value(x),
        }
    }

    /// Adds `scale * grad Phi(x)` to `out`.
    #[inline]
    fn add_scaled_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            FreePotential::Zero => {}
            FreePotential::Harmonic { stiffness } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o += scale * stiffness * v;
                }
            }
            FreePotential::Custom(f) => {
                let mut g = vec![0.0; x.len()];
                f.gradient(x, &mut g);
                for (o, v) in out.iter_mut().zip(&g) {
                    *o += scale * v;
                }
            }
        }
    }

    pub fn hessian_bound(&self) -> f64 {
        match self {
            FreePotential::Zero => 0.0,
            FreePotential::Harmonic { stiffness } => stiffness.abs(),
            FreePotential::Custom(f) => f.hessian_bound(),
        }
    }
}

/// The pair and free potentials driving one system.
#[derive(Clone, Debug)]
pub struct Potentials {
    pub pair: PairPotential,
    pub free: FreePotential,
}

impl Potentials {
    pub fn new(pair: PairPotential, free: FreePotential) -> Self {
        Self { pair, free }
    }

    pub fn hard_core_only() -> Self {
        Self { pair: PairPotential::hard_core_only(), free: FreePotential::Zero }
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.pair.is_zero() && self.free.is_zero()
    }
}

/// Drift at `x` from explicit neighbours, Euclidean metric.
///
/// Fails with a domain error if a neighbour sits inside the hard core
/// (`|x - y| < r - tol_hc`).
pub fn evaluate_drift(
    x: &[f64],
    neighbors: &[Vec<f64>],
    radius: f64,
    tol_hc: f64,
    pair: &PairPotential,
    free: &FreePotential,
) -> Result<Vec<f64>> {
    let d = x.len();
    let mut out = vec![0.0; d];
    let mut sep = vec![0.0; d];
    free.add_scaled_gradient(x, -0.5, &mut out);
    for (k, y) in neighbors.iter().enumerate() {
        if y.len() != d {
            return Err(Error::Input(format!("neighbour {k} has dimension {} != {d}", y.len())));
        }
        let rho = Boundary::Free.separation(x, y, &mut sep);
        pair_term(rho, &sep, radius, tol_hc, pair, &mut out).map_err(|distance| Error::Domain {
            j: usize::MAX,
            k,
            distance,
            radius,
        })?;
    }
    Ok(out)
}

/// Adds `-1/2 grad Psi(sep)` to `out`. Returns the distance on hard-core violation.
#[inline]
fn pair_term(
    rho: f64,
    sep: &[f64],
    radius: f64,
    tol_hc: f64,
    pair: &PairPotential,
    out: &mut [f64],
) -> std::result::Result<(), f64> {
    if rho < radius - tol_hc {
        return Err(rho);
    }
    let dpsi = pair.energy_derivative(rho);
    if dpsi != 0.0 {
        let factor = -0.5 * dpsi / rho;
        for (o, s) in out.iter_mut().zip(sep) {
            *o += factor * s;
        }
    }
    Ok(())
}

/// Drift of every ball of `config`, written ball-major into `out`.
///
/// Each ball sums its neighbours in ascending label order, so the result is
/// bit-stable and a sub-configuration sees exactly the same terms in the same order.
pub fn drift_field(config: &BallConfiguration, pots: &Potentials, tol_hc: f64, out: &mut [f64]) -> Result<()> {
    let d = config.dim();
    let n = config.n_balls();
    let r = config.radius();
    let boundary = config.boundary();
    out.iter_mut().for_each(|v| *v = 0.0);
    if pots.is_zero() {
        return Ok(());
    }
    let mut sep = vec![0.0; d];
    for j in 0..n {
        let xj = config.position(j);
        let bj = &mut out[j * d..(j + 1) * d];
        pots.free.add_scaled_gradient(xj, -0.5, bj);
        if pots.pair.is_zero() {
            continue;
        }
        for k in 0..n {
            if k == j {
                continue;
            }
            let rho = boundary.separation(xj, config.position(k), &mut sep);
            pair_term(rho, &sep, r, tol_hc, &pots.pair, bj).map_err(|distance| Error::Domain {
                j,
                k,
                distance,
                radius: r,
            })?;
        }
    }
    Ok(())
}

/// Bounds on `sup_xi sum_{x in xi} |grad Psi(x)|` and `sup_xi sum |grad^2 Psi(x)|`
/// over hard-core configurations, from a shell decomposition.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RuelleCertificate {
    pub sum_grad_bound: f64,
    pub sum_hess_bound: f64,
    /// Shells summed explicitly before the analytic tail.
    pub shells: usize,
    /// Contribution of all shells at distance `>= R_c` for the uncut potential;
    /// zero without a cutoff. Bounds the force-truncation error (times 1/2 for the drift).
    pub tail_grad_beyond_cutoff: f64,
    pub tail_hess_beyond_cutoff: f64,
}

const EXPLICIT_SHELLS: usize = 64;

/// Upper bound on the number of centres with `|x| in [k r, (k+1) r)` in a hard-core
/// configuration: disjoint balls of radius `r/2` packed in the widened annulus.
pub fn shell_capacity(k: usize, dim: usize) -> f64 {
    let k = k as f64;
    let outer = (k + 1.5).powi(dim as i32);
    let inner = (k - 0.5).max(0.0).powi(dim as i32);
    ((outer - inner) * 2f64.powi(dim as i32)).floor()
}

/// Maximum of `f` over `[lo, hi]`: dense sampling followed by golden-section refinement.
fn maximize_on(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const SAMPLES: usize = 512;
    let h = (hi - lo) / SAMPLES as f64;
    let mut best_i = 0;
    let mut best = f(lo);
    for i in 1..=SAMPLES {
        let v = f(lo + h * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut a, mut b) = (lo + h * best_i.saturating_sub(1) as f64, (lo + h * (best_i + 1) as f64).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if f(c) > f(e) {
            b = e;
        } else {
            a = c;
        }
    }
    best.max(f(0.5 * (a + b))) * (1.0 + 1e-9)
}

struct ShellSums {
    grad: f64,
    hess: f64,
}

/// Sum of capacity * shell supremum over shells `k >= k_from` of the uncut
/// potential, restricted to `rho < limit` when `limit` is set.
fn shell_series(pair: &PairPotential, r: f64, dim: usize, k_from: usize, limit: Option<f64>) -> Result<ShellSums> {
    let mut grad = 0.0;
    let mut hess = 0.0;
    let k_from = k_from.max(1);
    let last = match limit {
        Some(rc) => ((rc / r).floor() as usize).max(k_from),
        None => k_from + EXPLICIT_SHELLS - 1,
    };
    for k in k_from..=last {
        let lo = k as f64 * r;
        let hi = match limit {
            Some(rc) => ((k + 1) as f64 * r).min(rc),
            None => (k + 1) as f64 * r,
        };
        if hi <= lo {
            continue;
        }
        let cap = shell_capacity(k, dim);
        grad += cap * maximize_on(lo, hi, |rho| pair.uncut_gradient_norm(rho));
        hess += cap * maximize_on(lo, hi, |rho| pair.hessian_norm(rho));
    }
    if limit.is_none() {
        let tail = analytic_tail(pair, r, dim, last + 1)?;
        grad += tail.grad;
        hess += tail.hess;
    }
    Ok(ShellSums { grad, hess })
}

/// Bound on the shells `k >= k0` using the power-law envelope of the profile.
///
/// capacity(k) <= 2^(d+1) d (k + 1.5)^(d-1) and shell sup <= C (k r)^-p, so the tail
/// is dominated by an integral that converges iff p > d.
fn analytic_tail(pair: &PairPotential, r: f64, dim: usize, k0: usize) -> Result<ShellSums> {
    let Some(p) = pair.kind.decay_exponent() else {
        return Ok(ShellSums { grad: 0.0, hess: 0.0 });
    };
    let d = dim as f64;
    if p <= d {
        return Err(Error::Divergent(format!(
            "gradient decays as rho^-{p} but d = {dim}: the shell series behaves like sum k^({})",
            d - 1.0 - p
        )));
    }
    let (cg, ch) = pair.kind.tail_constants(k0 as f64 * r);
    let k0f = k0 as f64;
    let widen = ((k0f + 1.5) / k0f).powf(d - 1.0);
    let cap = 2f64.powf(d + 1.0) * d * widen;
    // sum_{k >= k0} k^(d-1-q) <= k0^(d-1-q) + k0^(d-q) / (q - d)
    let sum_pow = |q: f64| k0f.powf(d - 1.0 - q) + k0f.powf(d - q) / (q - d);
    let grad = pair.beta * cap * cg * r.powf(-p) * sum_pow(p);
    let hess = pair.beta * cap * ch * r.powf(-p - 1.0) * sum_pow(p + 1.0);
    Ok(ShellSums { grad, hess })
}

/// Shell-decomposition certificate for condition (R) at the potential's `beta` and cutoff.
///
/// Returns [`Error::Divergent`] when the uncut shell series diverges and no cutoff is set.
pub fn ruelle_check(pair: &PairPotential, r: f64, dim: usize) -> Result<RuelleCertificate> {
    if !(r > 0.0) || dim == 0 {
        return Err(Error::Input(format!("invalid geometry r = {r}, d = {dim}")));
    }
    if pair.is_zero() {
        return Ok(RuelleCertificate {
            sum_grad_bound: 0.0,
            sum_hess_bound: 0.0,
            shells: 0,
            tail_grad_beyond_cutoff: 0.0,
            tail_hess_beyond_cutoff: 0.0,
        });
    }
    match pair.cutoff {
        None => {
            let sums = shell_series(pair, r, dim, 1, None)?;
            Ok(RuelleCertificate {
                sum_grad_bound: sums.grad,
                sum_hess_bound: sums.hess,
                shells: EXPLICIT_SHELLS,
                tail_grad_beyond_cutoff: 0.0,
                tail_hess_beyond_cutoff: 0.0,
            })
        }
        Some(rc) => {
            let inside = shell_series(pair, r, dim, 1, Some(rc))?;
            let k_c = (rc / r).floor() as usize;
            let (tg, th) = match shell_series(pair, r, dim, k_c, None) {
                Ok(t) => (t.grad, t.hess),
                Err(Error::Divergent(_)) => (f64::INFINITY, f64::INFINITY),
                Err(e) => return Err(e),
            };
            Ok(RuelleCertificate {
                sum_grad_bound: inside.grad,
                sum_hess_bound: inside.hess,
                shells: k_c,
                tail_grad_beyond_cutoff: tg,
                tail_hess_beyond_cutoff: th,
            })
        }
    }
}

/// Global Lipschitz constant `K` of the configuration-space drift over hard-core
/// configurations.
///
/// The drift Jacobian is a symmetric block matrix whose block row `j` has
/// diagonal `-1/2 (sum_k H_jk + grad^2 Phi)` and off-diagonal blocks `1/2 H_jk`,
/// so its norm is at most `1/2 (S + S + sup|grad^2 Phi|)` with `S` the Hessian
/// shell sum. With a cutoff the truncated force is discontinuous at `R_c` and
/// `K` only holds for displacements that do not carry a pair across it.
pub fn lipschitz_bound(pair: &PairPotential, free: &FreePotential, r: f64, dim: usize) -> Result<f64> {
    let cert = ruelle_check(pair, r, dim)?;
    let local = cert.sum_hess_bound + free.hessian_bound();
    Ok(0.5 * (cert.sum_hess_bound + local))
}

/// `H_ell`: free energy of the balls in `U_ell = {|x| <= ell}` plus the pair
/// energy over ordered pairs of such balls (each unordered pair counted twice).
/// `+inf` if two of them overlap.
pub fn hamiltonian(config: &BallConfiguration, ell: f64, pots: &Potentials) -> f64 {
    let n = config.n_balls();
    let inside: Vec<usize> =
        (0..n).filter(|&j| config.position(j).iter().map(|v| v * v).sum::<f64>().sqrt() <= ell).collect();
    let r = config.radius();
    let mut h: f64 = inside.iter().map(|&j| pots.free.value(config.position(j))).sum();
    for (a, &j) in inside.iter().enumerate() {
        for &k in &inside[a + 1..] {
            let rho = config.distance(j, k);
            if rho < r {
                return f64::INFINITY;
            }
            h += 2.0 * pots.pair.energy(rho);
        }
    }
    h
}

/// Energy whose Boltzmann weight `e^-E` has log derivative `2 b`:
/// free energy plus pair energy over unordered pairs, `+inf` on overlap.
pub fn gibbs_energy(config: &BallConfiguration, pots: &Potentials) -> f64 {
    let n = config.n_balls();
    let r = config.radius();
    let mut e: f64 = (0..n).map(|j| pots.free.value(config.position(j))).sum();
    for j in 0..n {
        for k in j + 1..n {
            let rho = config.distance(j, k);
            if rho < r {
                return f64::INFINITY;
            }
            e += pots.pair.energy(rho);
        }
    }
    e
}

/// Energy of ball `j` against all others (plus its free energy), `+inf` on overlap.
pub(crate) fn one_ball_energy(config: &BallConfiguration, j: usize, pots: &Potentials) -> f64 {
    let r = config.radius();
    let mut e = pots.free.value(config.position(j));
    for k in 0..config.n_balls() {
        if k == j {
            continue;
        }
        let rho = config.distance(j, k);
        if rho < r {
            return f64::INFINITY;
        }
        e += pots.pair.energy(rho);
    }
    e
}
