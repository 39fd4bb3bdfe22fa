use hardball_core::diagnostics::{diagnostics_nbj, fit_continuity_envelope, label_order, path_modulus};
use hardball_core::gibbs::{acceptance_probability, gibbs_chain, GibbsSamplerConfig};
use hardball_core::potentials::gibbs_energy;
use hardball_core::{
    simulate_ske_n, BallConfiguration, Boundary, DyadicBrownianPath, FreePotential, PairPotential, Potentials,
};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn unif(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Two-sample Kolmogorov-Smirnov p-value from the asymptotic series.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let mut p = 0.0;
    for k in 1..200 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

fn periodic_dist(a: &[f64], b: &[f64], side: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            let d = d - side * (d / side).round();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[test]
fn hard_core_gas_pair_distance_matches_rejection_sampling() {
    let side = 10.0;
    let samples = 400;
    // independent chains, one pair distance each
    let gibbs: Vec<f64> = (0..samples)
        .map(|s| {
            let cfg = GibbsSamplerConfig::hard_core(2, 1.0, side, 3, 60, 1000 + s as u64);
            let x = gibbs_chain(&cfg, usize::MAX).unwrap().final_state;
            x.distance(0, 1)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut oracle = Vec::new();
    while oracle.len() < samples {
        let p: Vec<[f64; 2]> = (0..3).map(|_| [unif(&mut rng) * side, unif(&mut rng) * side]).collect();
        let ok = (0..3).all(|i| (i + 1..3).all(|j| periodic_dist(&p[i], &p[j], side) >= 1.0));
        if ok {
            oracle.push(periodic_dist(&p[0], &p[1], side));
        }
    }
    let p = ks_two_sample(gibbs, oracle);
    assert!(p > 0.01, "KS p-value {p}");
}

#[test]
fn metropolis_detailed_balance_on_a_ring() {
    // two balls on 16 sites of a ring of side 8; each move picks a ball and steps one site
    let side = 8.0;
    let sites = 16;
    let pots = Potentials::new(PairPotential::lennard_jones(1.5, Some(3.0)).unwrap(), FreePotential::Zero);
    let energy = |a: usize, b: usize| {
        let pos = vec![a as f64 * 0.5, b as f64 * 0.5];
        let c = BallConfiguration::new(1, 1.0, pos, Boundary::Periodic(side)).unwrap();
        gibbs_energy(&c, &pots)
    };
    let weight = |a: usize, b: usize| (-energy(a, b)).exp();
    let transition = |from: (usize, usize), to: (usize, usize)| -> f64 {
        let moved = (from.0 != to.0) as usize + (from.1 != to.1) as usize;
        if moved != 1 {
            return 0.0;
        }
        let step_ok = |x: usize, y: usize| (x + 1) % sites == y || (y + 1) % sites == x;
        if !(step_ok(from.0, to.0) || step_ok(from.1, to.1)) {
            return 0.0;
        }
        0.5 * 0.5 * acceptance_probability(energy(to.0, to.1) - energy(from.0, from.1))
    };
    let mut checked = 0;
    for a in 0..sites {
        for b in 0..sites {
            for c in 0..sites {
                for d in 0..sites {
                    let (x, y) = ((a, b), (c, d));
                    let lhs = weight(a, b) * transition(x, y);
                    let rhs = weight(c, d) * transition(y, x);
                    assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1e-300), "{x:?} {y:?}");
                    checked += (lhs > 0.0) as usize;
                }
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn noise_increment_variance() {
    let path = DyadicBrownianPath::sample(123, 10, 1.0, 50, 2).unwrap();
    let mut n = 0.0;
    let mut sum_sq = 0.0;
    for k in 0..path.n_steps() {
        for j in 0..50 {
            for v in path.increment(k, j) {
                n += 1.0;
                sum_sq += v * v;
            }
        }
    }
    let var = 2f64.powi(-10);
    // n s^2 / var ~ chi-square(n)
    let stat = sum_sq / var;
    assert!(n >= 1e5);
    assert!((stat - n).abs() <= 3.0 * (2.0 * n).sqrt(), "statistic {stat} vs {n}");
}

#[test]
fn brownian_modulus_envelope_is_reported() {
    let path = DyadicBrownianPath::sample(4, 10, 1.0, 1, 1).unwrap();
    let deltas = [1.0 / 256.0, 1.0 / 64.0, 1.0 / 16.0, 0.25];
    let moduli: Vec<f64> = deltas.iter().map(|&d| path_modulus(&path, 1.0, d).unwrap()).collect();
    assert!(moduli.windows(2).all(|w| w[0] <= w[1]));
    let c = fit_continuity_envelope(&deltas, &moduli);
    println!("fitted modulus constant {c:.3}");
    assert!(c.is_finite() && c > 0.0);
}

#[test]
fn nbj_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![3.0 * i as f64 - 10.0, unif(&mut rng) * 4.0 - 2.0]).collect();
    let x0 = BallConfiguration::from_points(1.0, &pts, Boundary::Free).unwrap();
    let path = DyadicBrownianPath::sample(8, 8, 1.0, 8, 2).unwrap();
    let traj = simulate_ske_n(&x0, &Potentials::hard_core_only(), &path).unwrap().trajectory;
    for ell in [0.5, 2.0, 5.0, 9.0, 50.0] {
        let order = label_order(&traj);
        // brute force: scan all (label, frame) pairs
        let mut expect = 0;
        for (rank, &j) in order.iter().enumerate() {
            for k in 0..traj.n_frames() {
                let p = traj.position(k, j);
                if (p[0] * p[0] + p[1] * p[1]).sqrt() <= ell {
                    expect = expect.max(rank + 1);
                }
            }
        }
        assert_eq!(diagnostics_nbj(&traj, ell, 1.0), expect, "ell {ell}");
    }
}
