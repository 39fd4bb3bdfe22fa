//! Shared fixtures for the kernel benchmarks.

use hardball_core::{BallConfiguration, Boundary, PairPotential, Potentials};

/// `n` balls on a square lattice with the given spacing.
pub fn lattice(n: usize, spacing: f64) -> BallConfiguration {
    let side = (n as f64).sqrt().ceil() as usize;
    let pos: Vec<f64> = (0..n).flat_map(|i| [(i % side) as f64 * spacing, (i / side) as f64 * spacing]).collect();
    BallConfiguration::new(2, 1.0, pos, Boundary::Free).expect("lattice is valid")
}

/// Two lattices far apart.
pub fn two_groups(per_group: usize) -> BallConfiguration {
    let a = lattice(per_group, 1.2);
    let shift = 100.0;
    let mut pos = a.positions().to_vec();
    pos.extend(a.positions().chunks(2).flat_map(|p| [p[0] + shift, p[1]]));
    BallConfiguration::new(2, 1.0, pos, Boundary::Free).expect("groups are valid")
}

pub fn lj_cut() -> Potentials {
    Potentials::new(PairPotential::lennard_jones(1.0, Some(1.25)).expect("valid"), Default::default())
}
