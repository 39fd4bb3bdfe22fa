//! Hard-ball configuration space: positions, the pair metric, contact
//! detection, pairwise inward normals and the contact graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default hard-core tolerance, relative to the diameter `r`.
pub const DEFAULT_TOL_HC: f64 = 1e-9;
/// Default relative contact tolerance; a pair is in contact when `dist <= r (1 + tol)`.
pub const DEFAULT_TOL_CONTACT: f64 = 1e-7;

/// How pair separations are measured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// Plain Euclidean distance in R^d.
    Free,
    /// Cubic periodic box of the given side, minimum-image convention.
    /// Positions are never wrapped; only separations are reduced.
    Periodic(f64),
}

impl Boundary {
    /// Writes `a - b` (minimum image if periodic) into `out` and returns its norm.
    #[inline]
    pub fn separation(&self, a: &[f64], b: &[f64], out: &mut [f64]) -> f64 {
        let mut sq = 0.0;
        match *self {
            Boundary::Free => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o = x - y;
                    sq += *o * *o;
                }
            }
            Boundary::Periodic(side) => {
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    let d = x - y;
                    // f64::round rounds half away from zero, so the image of -d is exactly -(image of d).
                    *o = d - side * (d / side).round();
                    sq += *o * *o;
                }
            }
        }
        sq.sqrt()
    }

    /// Distance between two points under this boundary.
    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Boundary::Free => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Boundary::Periodic(side) => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x - y;
                    let d = d - side * (d / side).round();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Labelled centres of `n` balls of diameter `radius` in `dim` dimensions.
///
/// Positions are stored flat, ball-major: ball `j` occupies
/// `positions[j * dim..(j + 1) * dim]`. Labels are the indices and never change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallConfiguration {
    dim: usize,
    radius: f64,
    positions: Vec<f64>,
    boundary: Boundary,
}

impl BallConfiguration {
    pub fn new(dim: usize, radius: f64, positions: Vec<f64>, boundary: Boundary) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Input(format!("hard-core diameter must be positive, got {radius}")));
        }
        if !positions.len().is_multiple_of(dim) {
            return Err(Error::Input(format!(
                "{} coordinates do not split into points of dimension {dim}",
                positions.len()
            )));
        }
        if let Boundary::Periodic(side) = boundary {
            if !(side.is_finite() && side > 2.0 * radius) {
                return Err(Error::Input(format!("periodic box side {side} must exceed twice the diameter {radius}")));
            }
        }
        let config = Self { dim, radius, positions, boundary };
        config.check_finite()?;
        Ok(config)
    }

    /// Convenience constructor from a list of points.
    pub fn from_points(radius: f64, points: &[Vec<f64>], boundary: Boundary) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Input("at least one point is required to infer the dimension".into()))?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Input("points have inconsistent dimension".into()));
        }
        Self::new(dim, radius, points.concat(), boundary)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.radius
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn n_balls(&self) -> usize {
        self.positions.len() / self.dim
    }

    #[inline]
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    #[inline]
    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    #[inline]
    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn position_mut(&mut self, j: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.positions[j * d..(j + 1) * d]
    }

    #[inline]
    pub fn distance(&self, j: usize, k: usize) -> f64 {
        self.boundary.distance(self.position(j), self.position(k))
    }

    /// Same geometry with different positions.
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, self.radius, positions, self.boundary)
    }

    /// Sub-configuration of the listed balls, in the listed order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut positions = Vec::with_capacity(indices.len() * self.dim);
        for &j in indices {
            positions.extend_from_slice(self.position(j));
        }
        Self { dim: self.dim, radius: self.radius, positions, boundary: self.boundary }
    }

    /// Smallest pair distance and the pair realising it, `None` for fewer than two balls.
    pub fn min_pair_distance(&self) -> Option<(usize, usize, f64)> {
        let n = self.n_balls();
        let mut best: Option<(usize, usize, f64)> = None;
        for j in 0..n {
            for k in j + 1..n {
                let d = self.distance(j, k);
                if best.is_none_or(|(_, _, b)| d < b) {
                    best = Some((j, k, d));
                }
            }
        }
        best
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!("non-finite coordinate {} of ball {}", i % self.dim, i / self.dim)));
        }
        Ok(())
    }
}

/// A pair of balls reported as touching, `j < k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub j: usize,
    pub k: usize,
    /// `dist - r`
    pub gap: f64,
}

/// True iff every pair is at distance at least `r - tol_hc`.
pub fn validate(config: &BallConfiguration, tol_hc: f64) -> Result<bool> {
    if config.n_balls() == 0 {
        return Err(Error::Input("empty configuration".into()));
    }
    config.check_finite()?;
    let threshold = config.radius() - tol_hc;
    Ok(config.min_pair_distance().is_none_or(|(_, _, d)| d >= threshold))
}

/// All pairs with `dist <= r (1 + tol_contact)`, in lexicographic order.
pub fn contact_pairs(config: &BallConfiguration, tol_contact: f64) -> Vec<ContactPair> {
    let n = config.n_balls();
    let r = config.radius();
    let reach = r * (1.0 + tol_contact);
    let mut out = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            let d = config.distance(j, k);
            if d <= reach {
                out.push(ContactPair { j, k, gap: d - r });
            }
        }
    }
    out
}

/// Connected components of the graph linking `j` and `k` whenever
/// `dist(x^j, x^k) <= r + eps`. Each component is sorted and components are
/// ordered by their smallest member.
pub fn contact_graph_components(config: &BallConfiguration, eps: f64) -> Vec<Vec<usize>> {
    let n = config.n_balls();
    let reach = config.radius() + eps;
    let mut uf = UnionFind::new(n);
    for j in 0..n {
        for k in j + 1..n {
            if config.distance(j, k) <= reach {
                uf.union(j, k);
            }
        }
    }
    uf.groups()
}

/// Configuration-space unit vector pointing into the feasible set at the
/// contact `pair`: block `j` is `u / sqrt 2`, block `k` is `-u / sqrt 2`,
/// all other blocks zero, with `u = (x^j - x^k) / |x^j - x^k|`.
pub fn normal_direction(config: &BallConfiguration, pair: &ContactPair, tol_contact: f64) -> Result<Vec<f64>> {
    let n = config.n_balls();
    if n < 2 {
        return Err(Error::Precondition("a single ball has no boundary".into()));
    }
    let (j, k) = (pair.j, pair.k);
    if j >= n || k >= n || j == k {
        return Err(Error::Precondition(format!("invalid pair ({j}, {k}) for {n} balls")));
    }
    let d = config.dim();
    let mut u = vec![0.0; d];
    let dist = config.boundary().separation(config.position(j), config.position(k), &mut u);
    if dist - config.radius() > config.radius() * tol_contact {
        return Err(Error::Precondition(format!(
            "pair ({j}, {k}) is not in contact (gap {:e})",
            dist - config.radius()
        )));
    }
    let scale = 1.0 / (dist * std::f64::consts::SQRT_2);
    let mut normal = vec![0.0; n * d];
    for a in 0..d {
        normal[j * d + a] = u[a] * scale;
        normal[k * d + a] = -u[a] * scale;
    }
    Ok(normal)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // smaller root wins so group identity does not depend on union order
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }

    pub(crate) fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for x in 0..n {
            let r = self.find(x);
            by_root[r].push(x);
        }
        by_root.into_iter().filter(|g| !g.is_empty()).collect()
    }
}
