use lindblad_ep::lindblad::*;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = SystemParams> {
    (0.1f64..3.0, -2.0f64..2.0, 0.0f64..10.0, 0.0f64..=1.0).prop_map(|(o, d, g, a)| SystemParams::new(o, d, g, a).unwrap())
}

fn state() -> impl Strategy<Value = DensityMatrix> {
    (0.0f64..=1.0, 0.0f64..std::f64::consts::PI, 0.0f64..std::f64::consts::TAU).prop_map(|(r, th, ph)| {
        DensityMatrix::from_bloch([r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()]).unwrap()
    })
}

proptest! {
    #[test]
    fn matrix_form_equals_dissipator_form(p in params(), rho in state()) {
        let direct = vectorize_op(&lindblad_rhs(&p, rho.matrix()));
        let via_l = build_liouvillian(&p).rate(&vectorize(&rho));
        for k in 0..4 {
            prop_assert!((direct[k] - via_l[k]).norm() <= 1e-12 * p.scale().max(1.0));
        }
    }

    #[test]
    fn trace_row_annihilates_exactly(p in params()) {
        let l = build_liouvillian(&p);
        for j in 0..4 {
            let s = l.matrix()[(0, j)] + l.matrix()[(3, j)];
            prop_assert_eq!(s, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn rhs_is_traceless_and_hermitian(p in params(), rho in state()) {
        let x = lindblad_rhs(&p, rho.matrix());
        prop_assert!(x.trace().norm() <= 1e-14 * p.scale().max(1.0));
        prop_assert!((x - x.adjoint()).norm() <= 1e-14 * p.scale().max(1.0));
    }

    #[test]
    fn rates_split_exactly(g in 0.0f64..100.0, a in 0.0f64..=1.0) {
        let p = SystemParams::new(1.0, 0.0, g, a).unwrap();
        prop_assert!((p.gamma0() + p.gammaphi() - g).abs() <= f64::EPSILON * g);
    }

    #[test]
    fn dissipators_do_not_commute(o in 0.1f64..3.0, d in -2.0f64..2.0, g in 0.01f64..10.0) {
        let dec = decompose_alpha(&SystemParams::new(o, d, g, 0.5).unwrap());
        prop_assert!(commutator_norm(&dec.decay, &dec.dephasing) > 0.0);
    }
}

#[test]
fn liouvillian_is_linear_in_alpha() {
    for (o, d, g) in [(1.0, 0.0, 2.0), (0.7, 0.3, 5.0), (2.0, -1.0, 0.4)] {
        let at = |a: f64| build_liouvillian(&SystemParams::new(o, d, g, a).unwrap());
        let (l0, l1) = (at(0.0), at(1.0));
        for k in 0..=10 {
            let a = k as f64 / 10.0;
            let mixed = l0.matrix() * C64::from(1.0 - a) + l1.matrix() * C64::from(a);
            let err = (mixed - at(a).matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err <= 1e-14 * g, "α = {a}: {err}");
        }
    }
}
