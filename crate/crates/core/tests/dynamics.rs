use lindblad_ep::dynamics::*;
use lindblad_ep::lindblad::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(t_end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
}

fn terminal(p: &SystemParams, step: f64) -> Op2 {
    let traj = evolve_master(p, &DensityMatrix::ground(), &[0.0, 4.0], Integrator::Rk4 { step: Some(step) }).unwrap();
    *traj.states.last().unwrap().matrix()
}

#[test]
fn rk4_converges_at_fourth_order() {
    for (o, d, g, a) in [(1.0, 0.0, 2.0, 0.0), (1.0, 0.4, 3.0, 0.7), (2.0, -0.5, 1.0, 1.0)] {
        let p = SystemParams::new(o, d, g, a).unwrap();
        let h = 0.2;
        let reference = terminal(&p, h / 20.0);
        let coarse = (terminal(&p, h) - reference).norm();
        let fine = (terminal(&p, h / 2.0) - reference).norm();
        let ratio = coarse / fine;
        assert!((12.0..=20.0).contains(&ratio), "{p:?}: ratio {ratio}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn master_path_stays_physical(o in 0.1f64..3.0, d in -2.0f64..2.0, g in 0.0f64..10.0, a in 0.0f64..=1.0, r in 0.0f64..=1.0, th in 0.0f64..3.14) {
        let p = SystemParams::new(o, d, g, a).unwrap();
        let rho0 = DensityMatrix::from_bloch([r * th.sin(), 0.0, r * th.cos()]).unwrap();
        let traj = evolve_master(&p, &rho0, &grid(5.0, 51), Integrator::default()).unwrap();
        for s in &traj.states {
            let m = s.matrix();
            prop_assert!((m.trace().re - 1.0).abs() <= 1e-9);
            prop_assert_eq!(m[(1, 0)], m[(0, 1)].conj());
            prop_assert_eq!(m[(0, 0)].im, 0.0);
            prop_assert!(s.min_eigenvalue() >= -1e-6);
        }
    }
}

#[test]
fn monte_carlo_agrees_with_master_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let times = grid(4.0, 21);
    for point in 0..20 {
        let p = SystemParams::new(1.0, rng.random_range(-1.0..1.0), rng.random_range(0.0..4.0), rng.random_range(0.0..=1.0)).unwrap();
        let master = evolve_master(&p, &DensityMatrix::ground(), &times, Integrator::default()).unwrap();
        let mc = mc_trajectories(&p, &Ket::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)), &times, 10_000, point).unwrap();
        let agree = (0..times.len())
            .filter(|&k| (mc.mean[k][(0, 0)].re - master.states[k].ee()).abs() <= 4.0 * mc.std_errors[k][0] + 1e-12)
            .count();
        assert!(agree as f64 >= 0.95 * times.len() as f64, "{p:?}: {agree}/{}", times.len());
    }
}

#[test]
fn jump_counts_match_integrated_rates() {
    let p = SystemParams::new(1.0, 0.2, 2.0, 0.4).unwrap();
    let t_end = 3.0;
    let fine = grid(t_end, 3001);
    let master = evolve_master(&p, &DensityMatrix::ground(), &fine, Integrator::default()).unwrap();
    let dt = fine[1] - fine[0];
    let pe: Vec<f64> = master.states.iter().map(|s| s.ee()).collect();
    let integral = dt * (pe.iter().sum::<f64>() - 0.5 * (pe[0] + pe[pe.len() - 1]));
    let expected = [p.gamma0() * integral, p.gammaphi() * integral];
    let mc = mc_trajectories(&p, &Ket::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)), &grid(t_end, 31), 10_000, 5).unwrap();
    for c in 0..2 {
        assert!((mc.mean_jumps[c] - expected[c]).abs() <= 4.0 * mc.jump_std_errors[c], "channel {c}: {} vs {}", mc.mean_jumps[c], expected[c]);
    }
}

#[test]
fn monte_carlo_errors_shrink_as_root_n() {
    let p = SystemParams::new(1.0, 0.0, 2.0, 0.3).unwrap();
    let times = grid(3.0, 16);
    let psi0 = Ket::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    let small = mc_trajectories(&p, &psi0, &times, 1_000, 9).unwrap();
    let large = mc_trajectories(&p, &psi0, &times, 4_000, 9).unwrap();
    for k in 1..times.len() {
        for obs in 0..4 {
            // ⟨σ_x⟩ stays exactly zero on resonance from |g⟩.
            if large.std_errors[k][obs] == 0.0 {
                assert_eq!(small.std_errors[k][obs], 0.0);
                continue;
            }
            let ratio = small.std_errors[k][obs] / large.std_errors[k][obs];
            assert!((1.0..=4.0).contains(&ratio), "t={} obs {obs}: {ratio}", times[k]);
        }
    }
}
