use lindblad_ep::lindblad::*;
use lindblad_ep::spectral::*;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = SystemParams> {
    (0.1f64..3.0, -2.0f64..2.0, 0.0f64..12.0, 0.0f64..=1.0).prop_map(|(o, d, g, a)| SystemParams::new(o, d, g, a).unwrap())
}

/// Largest distance under the best one-to-one matching of two triples.
fn matched_distance(a: &[C64], b: &[C64]) -> f64 {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    PERMS
        .iter()
        .map(|p| (0..3).map(|k| (a[k] - b[p[k]]).norm()).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

fn min_gap(v: &[C64]) -> f64 {
    let mut g = f64::INFINITY;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            g = g.min((v[i] - v[j]).norm());
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn zero_branch_and_trace_identity(p in params()) {
        let e = eigenvalues_closed_form(&p).unwrap();
        let spec = eigen_full(build_liouvillian(&p).matrix()).unwrap();
        let smallest = spec.values().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        prop_assert!(smallest <= 1e-10 * p.scale());
        let sum = e[0] + e[1] + e[2];
        let expected = C64::new(0.0, -p.gamma() * (1.0 + p.alpha()));
        prop_assert!((sum - expected).norm() <= 1e-10 * p.scale());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_form_agrees_with_general_solver(d in -2.0f64..2.0, g in 0.0f64..12.0, a in 0.0f64..=1.0) {
        let p = SystemParams::new(1.0, d, g, a).unwrap();
        let e = eigenvalues_closed_form(&p).unwrap();
        prop_assume!(min_gap(&e[..3]) >= 1e-4);
        let spec = eigen_full(build_liouvillian(&p).matrix()).unwrap();
        prop_assert!(matched_distance(&e[..3], &spec.nonzero_values()) <= 1e-9);
    }

    #[test]
    fn eigenpairs_have_small_residuals(p in params()) {
        let l = build_liouvillian(&p);
        let spec = eigen_full(l.matrix()).unwrap();
        let norm = l.frobenius_norm();
        let sum: C64 = spec.values().iter().sum();
        prop_assert!((sum - l.trace()).norm() <= 1e-10 * norm.max(1.0));
        for pair in &spec.pairs {
            prop_assert!((l.matrix() * pair.vector - pair.vector * pair.value).norm() <= 1e-9 * norm);
        }
    }

    #[test]
    fn steady_state_is_a_fixed_point(o in 0.1f64..3.0, d in -2.0f64..2.0, g in 0.05f64..12.0, a in 0.0f64..=1.0) {
        let p = SystemParams::new(o, d, g, a).unwrap();
        let l = build_liouvillian(&p);
        let ss = steady_state(&p).unwrap();
        prop_assert!(l.rate(&vectorize(&ss)).norm() <= 1e-10 * l.frobenius_norm());
    }

    #[test]
    fn exact_phase_pairs_are_mirrored(a in 0.0f64..=1.0, frac in 0.0f64..0.99) {
        let g = frac * 4.0 / (1.0 - 2.0 * a).abs().max(1e-3);
        let e = eigenvalues_closed_form(&SystemParams::new(1.0, 0.0, g, a).unwrap()).unwrap();
        prop_assert!((e[0].re + e[2].re).abs() <= 1e-10 * g.max(1.0));
        prop_assert!((e[0].im - e[2].im).abs() <= 1e-10 * g.max(1.0));
    }
}

#[test]
fn near_ep_points_agree_with_general_solver() {
    for a in [0.0, 0.2, 0.8, 1.0] {
        let g_star = 4.0 / (1.0f64 - 2.0 * a).abs();
        for eps in [1e-1, 1e-2, 1e-3] {
            for g in [g_star - eps, g_star + eps] {
                let p = SystemParams::new(1.0, 0.0, g, a).unwrap();
                let e = eigenvalues_closed_form(&p).unwrap();
                if min_gap(&e[..3]) < 1e-4 {
                    continue;
                }
                let spec = eigen_full(build_liouvillian(&p).matrix()).unwrap();
                let d = matched_distance(&e[..3], &spec.nonzero_values());
                assert!(d <= 1e-9, "α={a} γ={g}: {d}");
            }
        }
    }
}
