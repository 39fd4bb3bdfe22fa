use crate::geometry::{BallConfiguration, Boundary};

/// Configurations on a time grid, frame 0 being the start.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    n_balls: usize,
    radius: f64,
    boundary: Boundary,
    times: Vec<f64>,
    frames: Vec<f64>,
}

impl Trajectory {
    pub fn starting_at(config: &BallConfiguration, t0: f64) -> Self {
        Self {
            dim: config.dim(),
            n_balls: config.n_balls(),
            radius: config.radius(),
            boundary: config.boundary(),
            times: vec![t0],
            frames: config.positions().to_vec(),
        }
    }

    /// Builds a trajectory from raw frames, each of length `n_balls * dim`.
    pub fn from_frames(template: &BallConfiguration, times: Vec<f64>, frames: Vec<Vec<f64>>) -> crate::Result<Self> {
        let stride = template.n_balls() * template.dim();
        if times.len() != frames.len() || frames.iter().any(|f| f.len() != stride) {
            return Err(crate::Error::Input("frame count or frame length mismatch".into()));
        }
        Ok(Self {
            dim: template.dim(),
            n_balls: template.n_balls(),
            radius: template.radius(),
            boundary: template.boundary(),
            times,
            frames: frames.concat(),
        })
    }

    pub fn push(&mut self, time: f64, positions: &[f64]) {
        debug_assert_eq!(positions.len(), self.n_balls * self.dim);
        self.times.push(time);
        self.frames.extend_from_slice(positions);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_balls(&self) -> usize {
        self.n_balls
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_frames(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        let s = self.n_balls * self.dim;
        &self.frames[k * s..(k + 1) * s]
    }

    pub fn position(&self, k: usize, ball: usize) -> &[f64] {
        let i = (k * self.n_balls + ball) * self.dim;
        &self.frames[i..i + self.dim]
    }

    pub fn last_frame(&self) -> &[f64] {
        self.frame(self.n_frames() - 1)
    }

    pub fn config_at(&self, k: usize) -> BallConfiguration {
        BallConfiguration::new(self.dim, self.radius, self.frame(k).to_vec(), self.boundary)
            .expect("trajectory frames are finite by construction")
    }

    pub fn final_config(&self) -> BallConfiguration {
        self.config_at(self.n_frames() - 1)
    }

    /// Appends all frames of `other` except its first, which must coincide with our last.
    pub fn extend_from(&mut self, other: &Trajectory) {
        for k in 1..other.n_frames() {
            self.push(other.times[k], other.frame(k));
        }
    }

    /// Per-ball sub-trajectory in the listed order.
    pub fn subset(&self, balls: &[usize]) -> Trajectory {
        let mut frames = Vec::with_capacity(self.n_frames() * balls.len() * self.dim);
        for k in 0..self.n_frames() {
            for &b in balls {
                frames.extend_from_slice(self.position(k, b));
            }
        }
        Trajectory {
            dim: self.dim,
            n_balls: balls.len(),
            radius: self.radius,
            boundary: self.boundary,
            times: self.times.clone(),
            frames,
        }
    }

    /// `max_k |X(k) - Y(k)|` in configuration space (Euclidean, unwrapped coordinates).
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.n_frames(), other.n_frames(), "trajectories on different grids");
        (0..self.n_frames())
            .map(|k| self.frame(k).iter().zip(other.frame(k)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Smallest pair distance over all frames.
    pub fn min_pair_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..self.n_frames() {
            for j in 0..self.n_balls {
                for m in j + 1..self.n_balls {
                    best = best.min(self.boundary.distance(self.position(k, j), self.position(k, m)));
                }
            }
        }
        best
    }
}
