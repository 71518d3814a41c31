use std::sync::OnceLock;

use proptest::prelude::*;

use netmoment::bep::{Bep, Space};
use netmoment::experiments::estimate_moment;
use netmoment::kernels::{conj_poisson, dconj_poisson_dx, dpoisson_dx, poisson};
use netmoment::operators::{forward_coeffs, forward_field, Magnetization, Target};
use netmoment::spectral::{gram_assemble, rhs_vector, GramMatrix, GramOptions};
use netmoment::Geometry;

const N: usize = 20;

fn gram() -> &'static GramMatrix {
    static G: OnceLock<GramMatrix> = OnceLock::new();
    G.get_or_init(|| gram_assemble(&Geometry::reference(), N, &GramOptions::default()).unwrap())
}

fn piece() -> impl Strategy<Value = (f64, f64, f64)> {
    (-1.0f64..0.99, 0.005f64..1.0, -2.0f64..2.0).prop_map(|(lo, w, v)| (lo, (lo + w).min(1.0), v))
}

fn magnetization() -> impl Strategy<Value = Magnetization> {
    (piece(), piece()).prop_map(|(a, b)| Magnetization::from_triples(&[a], &[b]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_symmetries(x in -5.0f64..5.0, y in 0.01f64..2.0) {
        let p = poisson(x, y).unwrap();
        prop_assert!(p > 0.0);
        prop_assert_eq!(p, poisson(-x, y).unwrap());
        prop_assert_eq!(conj_poisson(x, y).unwrap(), -conj_poisson(-x, y).unwrap());
        prop_assert_eq!(dpoisson_dx(x, y).unwrap(), -dpoisson_dx(-x, y).unwrap());
        prop_assert_eq!(dconj_poisson_dx(x, y).unwrap(), dconj_poisson_dx(-x, y).unwrap());
    }

    #[test]
    fn cauchy_riemann(x in -3.0f64..3.0, y in 0.05f64..1.0) {
        let d = 1e-5;
        let dpdy = (poisson(x, y + d).unwrap() - poisson(x, y - d).unwrap()) / (2.0 * d);
        let dqdx = dconj_poisson_dx(x, y).unwrap();
        prop_assert!((dpdy + dqdx).abs() <= 1e-6 * dqdx.abs().max(1e-3 / y));
    }

    #[test]
    fn field_is_linear(a in magnetization(), b in magnetization(), x in -1.5f64..1.5, s in -3.0f64..3.0) {
        let g = Geometry::reference();
        let combo = a.linear_combination(s, &b, 1.0);
        let lhs = forward_field(&combo, &g, x).unwrap();
        let rhs = s * forward_field(&a, &g, x).unwrap() + forward_field(&b, &g, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn estimates_are_linear(a in magnetization(), b in magnetization(), s in -3.0f64..3.0) {
        let g = Geometry::reference();
        let r = rhs_vector(&g, N, &Target::E1).unwrap();
        let sol = Bep::new(gram(), r, 2.0, Space::L2).unwrap().solve(1e-4).unwrap();
        let est = |m: &Magnetization| estimate_moment(&forward_coeffs(m, &g, N).unwrap(), &sol).unwrap();
        let lhs = est(&a.linear_combination(s, &b, 1.0));
        let rhs = s * est(&a) + est(&b);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn solutions_are_hermitian_and_saturated(log_lambda in -9.0f64..0.0, w in any::<bool>(), e2 in any::<bool>()) {
        let g = Geometry::reference();
        let t = if e2 { Target::E2 } else { Target::E1 };
        let space = if w { Space::W012 } else { Space::L2 };
        let r = rhs_vector(&g, N, &t).unwrap();
        let bep = Bep::new(gram(), r, 2.0, space).unwrap();
        let sol = bep.solve(10f64.powf(log_lambda)).unwrap();
        prop_assert!(sol.coeffs.hermitian_defect() <= 1e-13 * sol.coeffs.max_abs());
        prop_assert!(bep.saturation_violation(&sol) < 1e-8);
        prop_assert!(bep.normal_equation_residual(&sol) < 1e-9);
    }

    #[test]
    fn constraint_decreases_in_lambda(l1 in -8.0f64..0.0, gap in 0.1f64..3.0) {
        let g = Geometry::reference();
        let r = rhs_vector(&g, N, &Target::E1).unwrap();
        let bep = Bep::new(gram(), r, 2.0, Space::L2).unwrap();
        let lo = bep.constraint_at(10f64.powf(l1)).unwrap();
        let hi = bep.constraint_at(10f64.powf(l1 + gap)).unwrap();
        prop_assert!(hi < lo);
    }
}

#[test]
fn gram_is_hermitian_and_positive() {
    let g = gram();
    let c = g.complex();
    for i in 0..g.dim() {
        for j in 0..g.dim() {
            assert!((c[(i, j)] - c[(j, i)].conj()).norm() <= 1e-14 * g.max_abs());
        }
    }
    let ev = netmoment::bep::spectral_decay(g);
    assert!(*ev.last().unwrap() > -1e-12 * ev[0]);
}
