mod common;

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use proptest::prelude::*;
use sktshadow::basis::{kernel_coordinates, neumann_eigenpair};
use sktshadow::reduction::{
    build_ansatz, c0_bracket, g_scalar, hj, hj_derivative, mode_integrals, nondegeneracy, reduce, s_leading,
    solve_mu,
};
use sktshadow::solver::residual;
use sktshadow::{Domain1D, EigenMode, Params, Sign, SktError, StationaryProblem};

use common::adaptive_simpson;

fn setup() -> (Domain1D, EigenMode) {
    let d = Domain1D::new(1.0, 256).unwrap();
    let m = neumann_eigenpair(&d, 1).unwrap();
    (d, m)
}

/// int_0^1 (1 + mu phi_1)^-k by adaptive quadrature.
fn quad_inv(mu: f64, k: i32) -> f64 {
    adaptive_simpson(&|x: f64| (1.0 + mu * SQRT_2 * (PI * x).cos()).powi(-k), 0.0, 1.0, 1e-14)
}

#[test]
fn hj_examples() {
    let (_, m) = setup();
    assert_eq!(hj(0.0, &m).unwrap(), 1.0);
    let oracle = quad_inv(0.5, 2) / quad_inv(0.5, 1);
    assert!((oracle - 2.0).abs() < 1e-11);
    assert!((hj(0.5, &m).unwrap() - 2.0).abs() < 1e-12);
    let near = hj(0.7, &m).unwrap();
    assert!((near - 50.0).abs() < 1e-9 && hj(0.705, &m).unwrap() > near);
    assert!(matches!(hj(0.75, &m), Err(SktError::OutOfBracket { .. })));
    assert!(matches!(hj(-1.0 / SQRT_2, &m), Err(SktError::OutOfBracket { .. })));
}

#[test]
fn hj_shape_suite() {
    let (_, m) = setup();
    let d = 1e-5;
    let slope0 = (hj(d, &m).unwrap() - hj(-d, &m).unwrap()) / (2.0 * d);
    assert!(slope0.abs() <= 1e-8);
    assert!(hj_derivative(0.0, &m).unwrap().abs() < 1e-14);
    let width = m.m_upper() - m.m_lower();
    for i in 0..50 {
        let mu = m.m_lower() + width * (i as f64 + 0.5) / 50.0;
        if mu.abs() < 1e-3 {
            continue;
        }
        let diff = hj(mu + 1e-5, &m).unwrap() - hj(mu - 1e-5, &m).unwrap();
        assert!(mu * diff > 0.0, "mu = {mu}");
        // analytic derivative against the closed form d/dmu 1/(1 - 2 mu^2)
        let exact = 4.0 * mu / (1.0 - 2.0 * mu * mu).powi(2);
        assert!((hj_derivative(mu, &m).unwrap() / exact - 1.0).abs() < 1e-8, "mu = {mu}");
    }
    for end in [m.m_lower() + 1e-4 * width, m.m_upper() - 1e-4 * width] {
        assert!(hj(end, &m).unwrap() > 1e3);
    }
}

#[test]
fn roots_for_ratio_two() {
    let (_, m) = setup();
    let p = Params::worked();
    let (minus, plus) = solve_mu(&p, &m).unwrap();
    assert!((plus - 0.5).abs() < 1e-12 && (minus + 0.5).abs() < 1e-12);
    assert!((hj(plus, &m).unwrap() - 2.0).abs() <= 1e-12 * 2.0);

    let close = Params { a1: 2.0 * 1.000001, ..p };
    let (mn, pl) = solve_mu(&close, &m).unwrap();
    assert!(pl < 1e-3 && mn > -1e-3);

    let equal = Params { a1: 2.0, ..p };
    assert!(matches!(solve_mu(&equal, &m), Err(SktError::RatioNotAboveOne { .. })));
    assert!(matches!(reduce(&equal, &m, Sign::Plus), Err(SktError::RatioNotAboveOne { .. })));
}

/// Two-term amplitude evaluated from its closed-form pieces, with
/// `int 1/l0 = sqrt 2` confirmed by quadrature.
fn s0_oracle(d1: f64) -> f64 {
    let i1 = quad_inv(0.5, 1);
    assert!((i1 - SQRT_2).abs() < 1e-12);
    let pi2 = PI * PI;
    let first = 16.0 / (0.25 * pi2 * pi2 * d1) * (1.0 - i1 / 2.0);
    let second = 4.0 / (0.25 * pi2) * (i1 - 1.0);
    first + second
}

#[test]
fn leading_amplitude_worked_set() {
    let (_, m) = setup();
    let p = Params::worked();
    let s = s_leading(&p, &m, 0.5).unwrap();
    let oracle = s0_oracle(1.0);
    assert!((s - oracle).abs() < 1e-12, "{s} vs {oracle}");
    assert!((s - 0.863_935_276).abs() < 1e-9);
    assert!((s_leading(&p, &m, -0.5).unwrap() - s).abs() < 1e-12);
    let heavy = Params { d1: 1e9, ..p };
    let limit = 16.0 / (PI * PI) * (SQRT_2 - 1.0);
    assert!((s_leading(&heavy, &m, 0.5).unwrap() - limit).abs() < 1e-8);
    assert!((limit - 0.671_498).abs() < 1e-6);
}

#[test]
fn scalar_equations_vanish_at_root() {
    let (_, m) = setup();
    let p = Params::worked();
    let r = reduce(&p, &m, Sign::Plus).unwrap();
    for s in [0.1, 1.0, 7.0] {
        assert!(g_scalar(s, r.mu0, &p, &m).unwrap().0.abs() < 1e-10);
    }
    let (_, g2) = g_scalar(r.s0, r.mu0, &p, &m).unwrap();
    assert!(g2.abs() < 1e-10 * (1.0 + m.lambda().powi(2)), "g2 = {g2}");
    let (_, g2_double) = g_scalar(2.0 * r.s0, r.mu0, &p, &m).unwrap();
    let slope = r.s0 * r.mu0 * m.lambda().powi(2) * p.b2 / (p.a2 * p.a2);
    assert!((g2_double - g2 - slope).abs() < 1e-10 * slope.abs());
}

#[test]
fn nondegeneracy_and_sign_constant() {
    let (_, m) = setup();
    let p = Params::worked();
    let i2 = 2.0 * SQRT_2;
    assert!((quad_inv(0.5, 2) - i2).abs() < 1e-11);
    let i3 = 1.25 / 0.5f64.powf(2.5);
    assert!((quad_inv(0.5, 3) - i3).abs() < 1e-10);
    let lower = 2.0 * PI.powi(4) * 0.5 * i2;
    for sign in [Sign::Plus, Sign::Minus] {
        let r = reduce(&p, &m, sign).unwrap();
        assert!((r.lower_bound - lower).abs() < 1e-9 * lower);
        assert!(r.det_value >= r.lower_bound);
        let (det, lb) = nondegeneracy(&r, &p, &m).unwrap();
        assert_eq!((det, lb), (r.det_value, r.lower_bound));
        let q = mode_integrals(r.mu0, &m).unwrap();
        assert!((c0_bracket(&p, &q) + 2.0 * SQRT_2).abs() < 1e-10);
        assert!(r.c0 < 0.0);
        assert!((r.i1 - SQRT_2).abs() < 1e-12 && (r.i2 - i2).abs() < 1e-11 && (r.i3 - i3).abs() < 1e-10);
    }
    // the lower bound carries the factor (1 - B/A)
    let near = Params { a1: 2.0 * 1.001, ..p };
    let r = reduce(&near, &m, Sign::Plus).unwrap();
    assert!(r.lower_bound < 1e-2 * lower);
}

#[test]
fn root_symmetry_and_integral_inequalities() {
    let (_, m) = setup();
    for a1 in [2.5, 4.0, 9.0, 30.0] {
        let p = Params { a1, ..Params::worked() };
        let plus = reduce(&p, &m, Sign::Plus).unwrap();
        let minus = reduce(&p, &m, Sign::Minus).unwrap();
        assert!((plus.mu0 + minus.mu0).abs() < 1e-10);
        assert!((plus.s0 - minus.s0).abs() < 1e-10 * plus.s0);
        for r in [&plus, &minus] {
            assert!(r.inequalities.all_hold(), "a1 = {a1}: {:?}", r.inequalities);
            assert!(r.s0 > 0.0 && r.c0 < 0.0 && r.det_value > 0.0);
            assert!(m.contains(r.mu0) && r.mu0 != 0.0);
        }
    }
}

#[test]
fn ansatz_profiles() {
    let (d, m) = setup();
    let p = Params::worked();
    let r = reduce(&p, &m, Sign::Plus).unwrap();
    let a = build_ansatz(&r, &p, &m, &d).unwrap();
    // u0 at x = 0 from the closed form 2/(1 + 0.5 sqrt 2), extrapolated to the wall
    let u0_at = |x: f64| p.a2 / (p.b2 * (1.0 + r.mu0 * m.value_at(x)));
    assert!((u0_at(0.0) - 2.0 / (1.0 + 0.5 * SQRT_2)).abs() < 1e-12);
    assert!((a.u0[0] - u0_at(d.nodes()[0])).abs() < 1e-12);
    assert!(a.u0.iter().chain(&a.w0_scaled).all(|v| *v > 0.0));
    assert!(a.phi0.first().iter().chain(a.phi0.second()).all(|v| *v > 0.0));
    let (s, t) = kernel_coordinates(&a.phi_star0, &m, &p);
    assert!(s.abs() < 1e-12 && t.abs() < 1e-12);

    // near-zero root: u0 nearly constant a2/b2
    let flat = Params { a1: 2.0 * (1.0 + 1e-8), ..p };
    let r = reduce(&flat, &m, Sign::Plus).unwrap();
    let a = build_ansatz(&r, &flat, &m, &d).unwrap();
    assert!(a.u0.iter().all(|u| (u - 2.0).abs() < 1e-3));
}

#[test]
fn ansatz_residual_is_second_order() {
    let d = Arc::new(Domain1D::new(1.0, 128).unwrap());
    let m = neumann_eigenpair(&d, 1).unwrap();
    let p = Params::worked();
    for sign in [Sign::Plus, Sign::Minus] {
        let r = reduce(&p, &m, sign).unwrap();
        let a = build_ansatz(&r, &p, &m, &d).unwrap();
        let norms: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&eps| {
                let prob = StationaryProblem::new(p, d.clone(), 1, eps, 0.0).unwrap();
                residual(&a.guess(eps), &prob).unwrap().coeff_sup_norm()
            })
            .collect();
        for w in norms.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "{sign}: order {order} from {norms:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn reduced_roots_satisfy_their_defining_equations(a1 in 2.2f64..40.0, beta in 0.0f64..2.0, d1 in 0.2f64..5.0, j in 1usize..4) {
        let d = Domain1D::new(1.0, 128).unwrap();
        let m = neumann_eigenpair(&d, j).unwrap();
        let p = Params { a1, beta, d1, ..Params::worked() };
        let target = p.ratio_a() / p.ratio_b();
        for sign in [Sign::Plus, Sign::Minus] {
            let r = reduce(&p, &m, sign).unwrap();
            prop_assert!((hj(r.mu0, &m).unwrap() - target).abs() <= 1e-12 * target);
            prop_assert!(r.inequalities.all_hold());
            prop_assert!(r.det_value >= r.lower_bound * (1.0 - 1e-8) && r.lower_bound > 0.0);
            prop_assert!(r.s0 > 0.0 && r.c0 < 0.0);
            prop_assert!(r.i1 > m.volume() && r.i1 <= target * m.volume());
        }
    }
}
