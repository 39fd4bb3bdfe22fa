//! End-to-end acceptance checks. Each test prints one `[PASS]`/`[FAIL]` line
//! (run with `--nocapture` to see them) and then asserts.

use hardball_core::cluster::{localized_simulate, LocalizeOptions};
use hardball_core::fcp::{fcp_certificate, verify_witness};
use hardball_core::geometry::{BallConfiguration, Boundary};
use hardball_core::gibbs::{box_side_for_packing, reversibility_test, GibbsSamplerConfig, ReplicaStart};
use hardball_core::harness::{run, Command, ExperimentSpec, EXIT_OK};
use hardball_core::integrator::{refinement_study, simulate_ske_n, uniqueness_probe, SimulationOptions};
use hardball_core::noise::DyadicBrownianPath;
use hardball_core::potentials::{drift_field, lipschitz_bound, ruelle_check, FreePotential, PairPotential, Potentials};
use hardball_core::skorohod::{solve_path, DrivingSegment, ProjectionSettings};
use hardball_core::trajectory::Trajectory;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn verdict(n: u32, what: &str, pass: bool, detail: String) {
    println!("[{}] criterion {n}: {what} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn unif(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Random sequential placement with pair distances at least `min_gap`.
fn random_config(rng: &mut ChaCha8Rng, n: usize, dim: usize, side: f64, min_gap: f64) -> BallConfiguration {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    while pts.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| unif(rng) * side).collect();
        let ok = pts.iter().all(|q| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_gap);
        if ok {
            pts.push(p);
        }
    }
    BallConfiguration::from_points(1.0, &pts, Boundary::Free).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn criterion_01_two_ball_closed_form() {
    let h = 1.0 / 4096.0;
    let x0 = BallConfiguration::new(1, 1.0, vec![0.0, 1.0], Boundary::Free).unwrap();
    let segs: Vec<DrivingSegment> = (0..4096).map(|_| DrivingSegment { dt: h, displacement: vec![h, 0.0] }).collect();
    let (traj, ledger) = solve_path(&x0, &segs, &ProjectionSettings::default()).unwrap();

    // 1D Skorohod map for the gap y = x2 - x1 - r driven by z = (w2 - w1): l(t) = sup_s (-z(s))^+
    let mut worst_pos = 0.0f64;
    let mut worst_lt = 0.0f64;
    let mut running_max = 0.0f64;
    let mut l_cum = 0.0;
    for k in 0..=4096 {
        let t = k as f64 * h;
        let (w1, w2) = (t, 0.0);
        running_max = running_max.max(-(w2 - w1));
        let ell = running_max;
        let sum = 0.0 + 1.0 + w1 + w2;
        let gap = 1.0 + (w2 - w1) + ell;
        let (e1, e2) = ((sum - gap) / 2.0, (sum + gap) / 2.0);
        if k > 0 {
            l_cum += ledger.steps()[k - 1].pairs.iter().map(|p| p.dl).sum::<f64>();
        }
        // difference-coordinate local time is 2 r L
        worst_lt = worst_lt.max((2.0 * 1.0 * l_cum - ell).abs());
        worst_pos = worst_pos.max((traj.position(k, 0)[0] - e1).abs()).max((traj.position(k, 1)[0] - e2).abs());
    }
    verdict(
        1,
        "two-ball closed form",
        worst_pos <= 5e-3 && worst_lt <= 5e-3,
        format!("position error {worst_pos:e}, local-time error {worst_lt:e}"),
    );
}

#[test]
fn criterion_02_refinement_convergence() {
    let x0 = BallConfiguration::new(2, 1.0, vec![0.0, 0.0, 1.05, 0.0], Boundary::Free).unwrap();
    let pots = Potentials::new(PairPotential::lennard_jones(1.0, None).unwrap(), FreePotential::Zero);
    let levels: Vec<u32> = (6..=12).collect();
    let study = refinement_study(&x0, &pots, 2024, &levels, 1.0, &SimulationOptions::default()).unwrap();
    let gaps: Vec<String> = study.gaps.iter().map(|g| format!("{:.3e}", g.sup_gap)).collect();
    let slope = study.slope.unwrap_or(f64::NAN);

    // context only: per-seed monotonicity and the seed-averaged gaps
    let mut mean = vec![0.0; levels.len() - 1];
    let mut monotone_seeds = 0;
    let seeds = 32;
    for seed in 0..seeds {
        let s = refinement_study(&x0, &pots, seed, &levels, 1.0, &SimulationOptions::default()).unwrap();
        monotone_seeds += s.strictly_decreasing as usize;
        for (m, g) in mean.iter_mut().zip(&s.gaps) {
            *m += g.sup_gap / seeds as f64;
        }
    }
    let mean_decreasing = mean.windows(2).all(|w| w[1] < w[0]);
    verdict(
        2,
        "refinement gaps strictly decrease with negative log slope",
        study.strictly_decreasing && slope < 0.0,
        format!(
            "gaps [{}], slope {slope:.3}, rate {:.3} per level; {monotone_seeds}/{seeds} other seeds strictly decreasing, \
             seed-averaged gaps decreasing: {mean_decreasing}",
            gaps.join(", "),
            -slope
        ),
    );
}

#[test]
fn criterion_03_determinism() {
    let text = "potential = lennard_jones\ncutoff = 2.5\nn_balls = 6\nspacing = 1.02\nlevel = 8\nseed = 17\n";
    let spec = ExperimentSpec::parse(text, Some(Command::Simulate), None).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(&spec, a.path());
    let rb = run(&spec, b.path());
    let mut same = ra.exit_code == EXIT_OK && rb.exit_code == EXIT_OK;
    for f in ["trajectory.csv", "ledger.csv", "summary.json", "manifest.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap_or_default();
        let y = std::fs::read(b.path().join(f)).unwrap_or_default();
        same &= !x.is_empty() && x == y;
    }
    let ledger_rows = std::fs::read_to_string(a.path().join("ledger.csv")).unwrap_or_default().lines().count() - 1;
    verdict(3, "byte-identical artifacts", same, format!("{ledger_rows} ledger rows"));
}

struct RandomRun {
    x0: BallConfiguration,
    path: DyadicBrownianPath,
    sim: hardball_core::integrator::Simulation,
}

fn ten_lj_runs() -> Vec<RandomRun> {
    let pots = Potentials::new(PairPotential::lennard_jones(1.0, Some(2.5)).unwrap(), FreePotential::Zero);
    (0..10u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i);
            let x0 = random_config(&mut rng, 10, 2, 5.0, 1.0);
            let path = DyadicBrownianPath::sample(200 + i, 10, 1.0, 10, 2).unwrap();
            let sim = simulate_ske_n(&x0, &pots, &path).unwrap();
            RandomRun { x0, path, sim }
        })
        .collect()
}

#[test]
fn criterion_04_hard_core_and_support() {
    let runs = ten_lj_runs();
    let mut min_d = f64::INFINITY;
    let mut worst_support = f64::NEG_INFINITY;
    let mut increments = 0usize;
    for run in &runs {
        let t = &run.sim.trajectory;
        for k in 0..t.n_frames() {
            for j in 0..t.n_balls() {
                for m in j + 1..t.n_balls() {
                    min_d = min_d.min(dist(t.position(k, j), t.position(k, m)));
                }
            }
        }
        for (s, step) in run.sim.ledger.steps().iter().enumerate() {
            for p in step.pairs.iter().filter(|p| p.dl > 0.0) {
                increments += 1;
                worst_support = worst_support.max(dist(t.position(s + 1, p.j), t.position(s + 1, p.k)));
            }
        }
    }
    let pass = min_d >= 1.0 - 1e-9 && worst_support <= 1.0 + 1e-7 && increments > 0;
    verdict(
        4,
        "hard core and local-time support",
        pass,
        format!(
            "min distance {min_d:.12}, largest distance at positive dL {worst_support:.12}, {increments} increments"
        ),
    );
}

#[test]
fn criterion_05_momentum_identity() {
    let runs = ten_lj_runs();
    let mut worst_ratio = 0.0f64;
    let mut pass = true;
    for run in &runs {
        let t = &run.sim.trajectory;
        let last = t.n_frames() - 1;
        let mut acc = [0.0f64; 2];
        for j in 0..run.x0.n_balls() {
            for (a, s) in acc.iter_mut().enumerate() {
                *s += t.position(last, j)[a] - run.x0.position(j)[a] - run.path.value(last, j)[a];
            }
        }
        let res = (acc[0] * acc[0] + acc[1] * acc[1]).sqrt();
        let bound = 1e-10 * run.path.n_steps() as f64;
        pass &= res <= bound;
        worst_ratio = worst_ratio.max(res / bound);
    }
    verdict(5, "sum of displacements equals sum of noise", pass, format!("worst residual / bound = {worst_ratio:.3e}"));
}

fn group_config(offset: f64, spacing: f64) -> BallConfiguration {
    let mut pts = Vec::new();
    for g in 0..2 {
        let x_shift = if g == 0 { -offset } else { offset };
        for i in 0..10 {
            let (cx, cy) = ((i % 5) as f64 * spacing, (i / 5) as f64 * spacing);
            let x = if g == 0 { x_shift - cx } else { x_shift + cx };
            pts.push(vec![x, cy]);
        }
    }
    BallConfiguration::from_points(1.0, &pts, Boundary::Free).unwrap()
}

#[test]
fn criterion_06_cluster_equivalence() {
    let eps = 0.5;
    let cutoff = 1.0 + eps / 2.0;
    let lj = PairPotential::lennard_jones(1.0, Some(cutoff)).unwrap();

    // far apart: no merges expected
    let far = group_config(20.0, 1.1);
    let pots = Potentials::new(lj.clone(), FreePotential::Zero);
    let path = DyadicBrownianPath::sample(61, 8, 1.0, 20, 2).unwrap();
    let mono = simulate_ske_n(&far, &pots, &path).unwrap();
    let loc = localized_simulate(&far, &pots, &path, &LocalizeOptions::new(eps, 16)).unwrap();
    let gap_far = mono.trajectory.sup_distance(&loc.trajectory);
    let guards_far = loc.history.iter().all(|w| w.guards.iter().all(|g| g.passed));

    // groups just beyond the cluster margin and pulled together by a confining field
    let near = group_config(0.8, 1.1);
    let pots_c = Potentials::new(lj, FreePotential::Harmonic { stiffness: 8.0 });
    let path_c = DyadicBrownianPath::sample(62, 8, 1.0, 20, 2).unwrap();
    let mono_c = simulate_ske_n(&near, &pots_c, &path_c).unwrap();
    let loc_c = localized_simulate(&near, &pots_c, &path_c, &LocalizeOptions::new(eps, 4)).unwrap();
    let gap_near = mono_c.trajectory.sup_distance(&loc_c.trajectory);
    let merges = loc_c.total_merges();
    let guards_near = loc_c.history.iter().all(|w| w.guards.iter().all(|g| g.passed));

    let pass = gap_far <= 1e-9 && gap_near <= 1e-9 && merges >= 1 && guards_far && guards_near;
    verdict(
        6,
        "localized run matches monolithic",
        pass,
        format!("gap {gap_far:e} without merges, gap {gap_near:e} with {merges} merge(s)"),
    );
}

#[test]
fn criterion_07_uniqueness_probe() {
    let x0 = BallConfiguration::new(2, 1.0, vec![0.0, 0.0, 1.15, 0.0], Boundary::Free).unwrap();
    let mut x1 = x0.clone();
    x1.position_mut(1)[0] += 1e-6;
    let pots = Potentials::new(PairPotential::lennard_jones(1.0, None).unwrap(), FreePotential::Zero);
    let path = DyadicBrownianPath::sample(7, 10, 1.0, 2, 2).unwrap();
    let rep = uniqueness_probe(&x0, &x1, &pots, &path, &SimulationOptions::default()).unwrap();
    let k = lipschitz_bound(&pots.pair, &pots.free, 1.0, 2).unwrap();
    let times: Vec<f64> = (0..=path.n_steps()).map(|i| i as f64 * path.step()).collect();
    // envelope recomputed here, no slack
    let pre_ok = (0..rep.pre_contact_frames).all(|i| rep.divergence[i] <= 1e-6 * (k * times[i]).exp());
    let pass = pre_ok && rep.fitted_contraction_constant.is_some();
    verdict(
        7,
        "pathwise-uniqueness probe",
        pass,
        format!(
            "K = {k:.4}, {} pre-contact frames, max ratio {:.3e}, first contact step {:?}, fitted C = {:?}",
            rep.pre_contact_frames, rep.pre_contact_max_ratio, rep.first_contact_step, rep.fitted_contraction_constant
        ),
    );
}

#[test]
fn criterion_08_reversibility() {
    let side = box_side_for_packing(30, 2, 1.0, 0.2);
    let mut cfg = GibbsSamplerConfig::hard_core(2, 1.0, side, 30, 400, 8);
    cfg.proposal_scale = 0.5;
    let eq = reversibility_test(&cfg, 10, 0.5, 200, ReplicaStart::Gibbs).unwrap();
    let control = reversibility_test(&cfg, 10, 0.5, 200, ReplicaStart::Lattice).unwrap();
    verdict(
        8,
        "equilibrium histogram preserved, lattice control rejected",
        eq.pass && !control.pass,
        format!(
            "gibbs: chi2 {:.2} (df {}, p {:.4}); lattice: chi2 {:.1} (p {:.2e})",
            eq.chi_square, eq.degrees_of_freedom, eq.p_value, control.chi_square, control.p_value
        ),
    );
}

fn max_lipschitz_ratio(pair: &PairPotential, trials: usize, seed: u64) -> f64 {
    let pots = Potentials::new(pair.clone(), FreePotential::Zero);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let n = 8;
    let mut bx = vec![0.0; n * 3];
    let mut by = vec![0.0; n * 3];
    let mut done = 0;
    while done < trials {
        // dense cluster so that near-contact pairs are common
        let x = random_config(&mut rng, n, 3, 3.2, 1.02);
        let scale = 0.02 * unif(&mut rng) + 1e-4;
        let pos: Vec<f64> = x.positions().iter().map(|v| v + scale * (2.0 * unif(&mut rng) - 1.0)).collect();
        let y = x.with_positions(pos).unwrap();
        // keep the segment between x and y inside the hard-core region
        let (mx, my) = (x.min_pair_distance().unwrap().2, y.min_pair_distance().unwrap().2);
        if mx.min(my) - 4.0 * scale * 3f64.sqrt() < 1.0 {
            continue;
        }
        drift_field(&x, &pots, 0.0, &mut bx).unwrap();
        drift_field(&y, &pots, 0.0, &mut by).unwrap();
        let num = dist(&bx, &by);
        let den = dist(x.positions(), y.positions());
        worst = worst.max(num / den);
        done += 1;
    }
    worst
}

#[test]
fn criterion_09_ruelle_certificates() {
    let lj = PairPotential::lennard_jones(1.0, None).unwrap();
    let riesz = PairPotential::riesz(4.0, 1.0, None).unwrap();
    let c_lj = ruelle_check(&lj, 1.0, 3).unwrap();
    let c_rz = ruelle_check(&riesz, 1.0, 3).unwrap();
    let finite = [c_lj.sum_grad_bound, c_lj.sum_hess_bound, c_rz.sum_grad_bound, c_rz.sum_hess_bound]
        .iter()
        .all(|v| v.is_finite());
    let k_lj = lipschitz_bound(&lj, &FreePotential::Zero, 1.0, 3).unwrap();
    let k_rz = lipschitz_bound(&riesz, &FreePotential::Zero, 1.0, 3).unwrap();
    let r_lj = max_lipschitz_ratio(&lj, 10_000, 91);
    let r_rz = max_lipschitz_ratio(&riesz, 10_000, 92);
    verdict(
        9,
        "finite certificates and measured Lipschitz ratios below K",
        finite && r_lj <= k_lj && r_rz <= k_rz,
        format!("LJ: ratio {r_lj:.3} vs K {k_lj:.3}; Riesz a=4: ratio {r_rz:.3} vs K {k_rz:.3}"),
    );
}

#[test]
fn criterion_10_fcp_certificate() {
    let pts: Vec<Vec<f64>> =
        vec![vec![0.0, 0.0], vec![1.2, 0.0], vec![-1.2, 0.0], vec![0.0, 1.2], vec![0.0, -1.2], vec![1.2, 1.2]];
    let x0 = BallConfiguration::from_points(1.0, &pts, Boundary::Free).unwrap();
    let pots = Potentials::new(PairPotential::hard_core_only(), FreePotential::Harmonic { stiffness: 4.0 });
    let path = DyadicBrownianPath::sample(10, 8, 1.0, 6, 2).unwrap();
    let traj = simulate_ske_n(&x0, &pots, &path).unwrap().trajectory;
    let (eps, p, a, m) = (0.2, 1, 3, 4);
    let outcome = fcp_certificate(&traj, eps, p, 1.0, a, m).unwrap();
    let witness_ok = outcome.witness().map(|w| verify_witness(w, &traj)).map(|r| r.is_ok()).unwrap_or(false);

    // ball 5 escapes radially during window 2 and stays out
    let frames: Vec<Vec<f64>> = (0..traj.n_frames())
        .map(|k| {
            let mut f = traj.frame(k).to_vec();
            let t = traj.times()[k];
            let s = ((t - 0.5) / 0.25).clamp(0.0, 1.0);
            f[10] += 40.0 * s;
            f
        })
        .collect();
    let crossing = Trajectory::from_frames(&x0, traj.times().to_vec(), frames).unwrap();
    let refused = fcp_certificate(&crossing, eps, p, 1.0, a, m).unwrap();
    let refusal = refused.refusal().cloned();
    let refusal_ok = refusal.as_ref().is_some_and(|r| r.window == 2 && r.ball == Some(5));
    verdict(
        10,
        "witness for a confined run, refusal for a crossing run",
        witness_ok && refusal_ok,
        format!("witness verified: {witness_ok}, refusal: {refusal:?}"),
    );
}
