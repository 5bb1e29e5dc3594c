use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sktshadow::basis::{kernel_coordinates, kernel_e1, kernel_e2, neumann_eigenpair, FieldRole};
use sktshadow::reduction::{build_ansatz, reduce};
use sktshadow::solver::{
    arclength_continue, continue_branch, eta_homotopy, jacobian, jacobian_with, newton, residual, sup_distance,
    ArclengthOptions, Derivatives, Parameter,
};
use sktshadow::{BranchPoint, Domain1D, FieldPair, NewtonOptions, Params, Sign, SktError, StationaryProblem};

fn dom(n: usize) -> Arc<Domain1D> {
    Arc::new(Domain1D::new(1.0, n).unwrap())
}

fn problem(d: &Arc<Domain1D>, p: Params, eps: f64, eta: f64) -> StationaryProblem {
    StationaryProblem::new(p, d.clone(), 1, eps, eta).unwrap()
}

fn shadow_point(d: &Arc<Domain1D>, p: Params, eps: f64, sign: Sign) -> BranchPoint {
    let prob = problem(d, p, eps, 0.0);
    continue_branch(&prob, &[eps], sign, &NewtonOptions::default()).unwrap().points.remove(0)
}

fn log_grid(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| (hi.ln() + (lo.ln() - hi.ln()) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[test]
fn kernel_direction_has_zero_limit_residual() {
    let d = dom(128);
    let p = Params::worked();
    let prob = problem(&d, p, 0.0, 0.0);
    let m = neumann_eigenpair(&d, 1).unwrap();
    let x = kernel_e1(&d, &p).scaled(0.7).axpy(0.1, &kernel_e2(&d, &m));
    assert!(residual(&x, &prob).unwrap().coeff_sup_norm() < 1e-12);
    assert!(matches!(StationaryProblem::new(p, d.clone(), 1, 0.0, 1e-3), Err(SktError::ContextInvalid(_))));
    assert!(matches!(prob.with_eta(1e-3), Err(SktError::ContextInvalid(_))));
}

#[test]
fn residual_reports_offending_node() {
    let d = dom(64);
    let p = Params::worked();
    let prob = problem(&d, p, 1e-2, 0.0);
    let mut psi = vec![1.0; 64];
    psi[17] = -0.5;
    let x = FieldPair::from_nodal(&d, vec![1.0; 64], psi, FieldRole::State);
    assert_eq!(residual(&x, &prob), Err(SktError::PositivityLoss { node: 17 }));
}

#[test]
fn limit_jacobian_is_the_degenerate_operator() {
    let d = dom(64);
    let p = Params::worked();
    let prob = problem(&d, p, 0.0, 0.0);
    let x = kernel_e1(&d, &p).scaled(0.8);
    let jac = jacobian(&x, &prob).unwrap();
    let mut sv: Vec<f64> = jac.singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    let top = sv[sv.len() - 1];
    assert!(sv[0] < 1e-12 * top && sv[1] < 1e-12 * top, "{:?}", &sv[..3]);
    assert!(sv[2] > 1.0, "{:?}", &sv[..3]);
}

fn smallest_eigen_modulus(pt: &BranchPoint, prob: &StationaryProblem) -> f64 {
    let jac = jacobian(&pt.phi, prob).unwrap();
    jac.complex_eigenvalues().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
}

#[test]
fn kernel_breaks_at_order_eps() {
    let d = dom(64);
    let p = Params::worked();
    let a = shadow_point(&d, p, 2e-3, Sign::Plus);
    let b = shadow_point(&d, p, 1e-3, Sign::Plus);
    let ea = smallest_eigen_modulus(&a, &problem(&d, p, 2e-3, 0.0));
    let eb = smallest_eigen_modulus(&b, &problem(&d, p, 1e-3, 0.0));
    let ratio = ea / eb;
    assert!((1.7..=2.3).contains(&ratio), "{ea} / {eb} = {ratio}");
}

fn random_direction(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(2 * n, |k, _| rng.gen_range(-1.0..1.0) / (1.0 + ((k % n) * (k % n)) as f64))
}

fn fd_agreement(pt: &FieldPair, prob: &StationaryProblem, seed: u64) -> f64 {
    let d = prob.dom_arc();
    let jac = jacobian(pt, prob).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let v = random_direction(d.n(), &mut rng);
        let h = 1e-6 * pt.coeff_sup_norm() / v.amax();
        let plus = FieldPair::from_stacked(&d, &(pt.stacked() + &v * h), FieldRole::State);
        let minus = FieldPair::from_stacked(&d, &(pt.stacked() - &v * h), FieldRole::State);
        let fd = (residual(&plus, prob).unwrap().stacked() - residual(&minus, prob).unwrap().stacked()) / (2.0 * h);
        worst = worst.max((&jac * &v - &fd).amax() / fd.amax());
    }
    worst
}

#[test]
fn jacobian_matches_directional_differences() {
    let d = dom(64);
    for (beta, eps, eta) in [(0.0, 1e-2, 0.0), (0.8, 5e-3, 0.0), (0.0, 1e-2, 1e-5), (1.5, 2e-2, 1e-4)] {
        let p = Params { beta, ..Params::worked() };
        let pt = shadow_point(&d, p, eps, Sign::Plus);
        let prob = problem(&d, p, eps, eta);
        let err = fd_agreement(&pt.phi, &prob, 7);
        assert!(err <= 1e-6, "beta {beta} eps {eps} eta {eta}: {err}");
        let analytic = jacobian_with(&pt.phi, &prob, Derivatives::Analytic).unwrap();
        let fd = jacobian_with(&pt.phi, &prob, Derivatives::FiniteDifference).unwrap();
        assert!((analytic - &fd).amax() <= 1e-6 * fd.amax());
    }
    let dd = Arc::new(Domain1D::new(1.0, 64).unwrap().with_dealiasing());
    let p = Params::worked();
    let pt = shadow_point(&dd, p, 1e-2, Sign::Minus);
    assert!(fd_agreement(&pt.phi, &problem(&dd, p, 1e-2, 0.0), 11) <= 1e-6);
}

#[test]
fn newton_from_ansatz_and_from_solution() {
    let d = dom(128);
    let p = Params::worked();
    let m = neumann_eigenpair(&d, 1).unwrap();
    let root = reduce(&p, &m, Sign::Plus).unwrap();
    let ansatz = build_ansatz(&root, &p, &m, &d).unwrap();
    let opts = NewtonOptions::default();
    let mut coords = Vec::new();
    for eps in [1e-2, 5e-3, 1e-3] {
        let prob = problem(&d, p, eps, 0.0);
        let pt = newton(&ansatz.guess(eps), &prob, &opts).unwrap();
        assert!(pt.iterations <= 6, "eps {eps}: {} iterations", pt.iterations);
        assert!(pt.residual_norm <= opts.tol * pt.phi.sup_norm().max(1.0));
        coords.push((eps, pt.s_eps, pt.mu_eps));
        // restart at the solution: accepted immediately
        let again = newton(&pt.phi, &prob, &opts).unwrap();
        assert_eq!(again.iterations, 1);
        assert_eq!(again.phi, pt.phi);
    }
    // |s(eps) - s0|, |mu(eps) - mu0| shrink linearly
    let ks: Vec<f64> = coords.iter().map(|(e, s, _)| (s - root.s0).abs() / e).collect();
    let km: Vec<f64> = coords.iter().map(|(e, _, mu)| (mu - root.mu0).abs() / e).collect();
    assert!(ks.iter().chain(&km).all(|k| *k < 50.0), "{ks:?} {km:?}");
    assert!((ks[0] / ks[1] - 1.0).abs() < 0.2 && (km[0] / km[1] - 1.0).abs() < 0.2, "{ks:?} {km:?}");
}

#[test]
fn newton_rejects_bad_inputs() {
    let d = dom(64);
    let p = Params { beta: 1.0, ..Params::worked() };
    let prob = problem(&d, p, 1e-2, 0.0);
    let phi: Vec<f64> = vec![1.0; 64];
    let mut psi = vec![2.0; 64];
    psi[3] = 0.5; // psi - beta phi < 0
    let x = FieldPair::from_nodal(&d, phi, psi, FieldRole::State);
    assert!(matches!(newton(&x, &prob, &NewtonOptions::default()), Err(SktError::PositivityLoss { node: 3 })));
    let zero = problem(&d, p, 0.0, 0.0);
    let ok = kernel_e1(&d, &p);
    assert_eq!(newton(&ok, &zero, &NewtonOptions::default()).unwrap_err(), SktError::EpsilonZero);
    let tight = NewtonOptions { max_iter: 1, tol: 1e-30, ..NewtonOptions::default() };
    let start = shadow_point(&d, p, 1e-2, Sign::Plus);
    assert!(matches!(
        newton(&start.phi.scaled(1.05), &prob, &tight),
        Err(SktError::NoConvergence { iterations: 1, .. })
    ));
}

#[test]
fn branch_approaches_limiting_profiles() {
    let d = dom(128);
    let p = Params::worked();
    let m = neumann_eigenpair(&d, 1).unwrap();
    let grid = log_grid(1e-1, 1e-4, 16);
    let opts = NewtonOptions::default();
    for sign in [Sign::Plus, Sign::Minus] {
        let root = reduce(&p, &m, sign).unwrap();
        let b = continue_branch(&problem(&d, p, grid[0], 0.0), &grid, sign, &opts).unwrap();
        assert_eq!(b.points.len(), 16);
        assert!(b.points.windows(2).all(|w| w[1].eps < w[0].eps));
        for pt in &b.points {
            assert!(pt.residual_norm <= opts.tol * pt.phi.sup_norm().max(1.0));
            assert!(pt.u_min() > 0.0 && pt.w.iter().all(|w| *w > 0.0));
            assert!(pt.s_eps > 0.0);
            assert!(pt.phi.first().iter().zip(pt.phi.second()).all(|(a, b)| *a > 0.0 && b - p.beta * a > 0.0));
            // Phi - s e1 - (b2/a2) s mu e2 has no kernel component
            let rest = pt.phi.axpy(-pt.s_eps, &kernel_e1(&d, &p)).axpy(-p.b2 / p.a2 * pt.s_eps * pt.mu_eps, &kernel_e2(&d, &m));
            let (s, t) = kernel_coordinates(&rest, &m, &p);
            assert!(s.abs() <= 1e-10 && t.abs() <= 1e-10);
        }
        let last = b.points.last().unwrap();
        let limit = p.b2 / p.a2 * root.s0 * (1.0 + root.mu0.abs() * std::f64::consts::SQRT_2);
        let got = last.eps * last.w_max();
        assert!((got / limit - 1.0).abs() <= 0.02, "{sign}: eps max w {got} vs {limit}");
        let u_lim = p.a2 / (p.b2 * (1.0 - root.mu0.abs() * std::f64::consts::SQRT_2));
        assert!((0.9 * u_lim..=1.1 * u_lim).contains(&last.u_max()), "{sign}: max u {}", last.u_max());
    }
}

#[test]
fn reduced_coordinates_have_finite_slopes() {
    let d = dom(128);
    let p = Params::worked();
    let m = neumann_eigenpair(&d, 1).unwrap();
    let root = reduce(&p, &m, Sign::Plus).unwrap();
    let grid = [4e-3, 2e-3, 1e-3, 5e-4];
    let b = continue_branch(&problem(&d, p, grid[0], 0.0), &grid, Sign::Plus, &NewtonOptions::default()).unwrap();
    let qs: Vec<f64> = b.points.iter().map(|pt| (pt.s_eps - root.s0) / pt.eps).collect();
    let qm: Vec<f64> = b.points.iter().map(|pt| (pt.mu_eps - root.mu0) / pt.eps).collect();
    for q in [&qs, &qm] {
        for w in q.windows(2) {
            let r = w[0] / w[1];
            assert!((0.5..=2.0).contains(&r), "{q:?}");
        }
    }
}

#[test]
fn single_point_and_invalid_grids() {
    let d = dom(64);
    let p = Params::worked();
    let prob = problem(&d, p, 1e-2, 0.0);
    let opts = NewtonOptions::default();
    assert_eq!(continue_branch(&prob, &[1e-2], Sign::Plus, &opts).unwrap().points.len(), 1);
    assert!(matches!(continue_branch(&prob, &[1e-3, 1e-2], Sign::Plus, &opts), Err(SktError::Config(_))));
    assert!(matches!(continue_branch(&prob, &[], Sign::Plus, &opts), Err(SktError::Config(_))));
    assert!(matches!(continue_branch(&prob, &[0.5], Sign::Plus, &opts), Err(SktError::Config(_))));
    let flat = Params { a1: 2.0, ..p };
    let prob = problem(&d, flat, 1e-2, 0.0);
    assert!(matches!(continue_branch(&prob, &[1e-2], Sign::Plus, &opts), Err(SktError::RatioNotAboveOne { .. })));
}

/// Coefficients of the finer solution agree with the coarser one, and the
/// extra modes are negligible.
#[test]
fn doubling_the_grid_changes_nothing() {
    let p = Params::worked();
    let coarse = shadow_point(&dom(128), p, 1e-2, Sign::Plus);
    let fine = shadow_point(&dom(256), p, 1e-2, Sign::Plus);
    let scale = coarse.phi.coeff_sup_norm();
    for (c, f) in [
        (coarse.phi.first_coeffs(), fine.phi.first_coeffs()),
        (coarse.phi.second_coeffs(), fine.phi.second_coeffs()),
    ] {
        let shared = sup_distance(c, &f[..128]);
        let tail = f[128..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(shared <= 1e-9 * scale && tail <= 1e-9 * scale, "{shared:e} {tail:e}");
    }
}

#[test]
fn dealiasing_agrees_with_plain_collocation() {
    let p = Params::worked();
    let plain = shadow_point(&dom(128), p, 5e-3, Sign::Minus);
    let dd = Arc::new(Domain1D::new(1.0, 128).unwrap().with_dealiasing());
    let alias_free = shadow_point(&dd, p, 5e-3, Sign::Minus);
    let diff = sup_distance(plain.phi.first_coeffs(), alias_free.phi.first_coeffs())
        .max(sup_distance(plain.phi.second_coeffs(), alias_free.phi.second_coeffs()));
    assert!(diff <= 1e-9 * plain.phi.coeff_sup_norm(), "{diff:e}");
}

#[test]
fn full_system_states_converge_to_the_shadow_state() {
    let d = dom(128);
    let p = Params::worked();
    let opts = NewtonOptions::default();
    let shadow = shadow_point(&d, p, 1e-2, Sign::Plus);
    let prob = problem(&d, p, 1e-2, 0.0);
    let alphas = [6.4e4, 1.28e5, 2.56e5, 5.12e5];
    let b = eta_homotopy(&shadow, &prob, &alphas, Sign::Plus, &opts).unwrap();
    let dist: Vec<f64> = b.points.iter().map(|pt| sup_distance(&pt.u, &shadow.u)).collect();
    for w in dist.windows(2) {
        assert!((w[1] / w[0] - 0.5).abs() <= 0.05, "{dist:?}");
    }
    for (pt, a) in b.points.iter().zip(alphas) {
        assert!((pt.alpha() - a).abs() <= 1e-9 * a);
        let v = pt.v();
        for k in 0..v.len() {
            assert!((v[k] - pt.w[k] / a).abs() <= 1e-12 * v[k].abs());
        }
    }

    // eta = 0 is the shadow problem itself
    let same = newton(&shadow.phi, &prob.with_eta(0.0).unwrap(), &opts).unwrap();
    assert_eq!(same.phi, shadow.phi);

    // no competition: eta multiplies nothing
    let free = Params { c1: 1e-300, c2: 1e-300, ..p };
    let sh = shadow_point(&d, free, 1e-2, Sign::Plus);
    let b = eta_homotopy(&sh, &problem(&d, free, 1e-2, 0.0), &[1e3, 1e4], Sign::Plus, &opts).unwrap();
    for pt in &b.points {
        assert!(sup_distance(&pt.u, &sh.u) <= 1e-12);
    }

    assert!(matches!(eta_homotopy(&b.points[0], &prob, &[1e4], Sign::Plus, &opts), Err(SktError::Config(_))));
    assert!(matches!(eta_homotopy(&shadow, &prob, &[1e4, 1e3], Sign::Plus, &opts), Err(SktError::Config(_))));
}

/// Natural continuation in eta stalls at a fold; pseudo-arclength passes it
/// and the parameter rate changes sign there.
#[test]
fn eta_branch_folds_at_moderate_alpha() {
    let d = dom(128);
    let p = Params::worked();
    let shadow = shadow_point(&d, p, 1e-2, Sign::Plus);
    let prob = problem(&d, p, 1e-2, 0.0);
    let opts = NewtonOptions::default();
    assert!(matches!(eta_homotopy(&shadow, &prob, &[1e3], Sign::Plus, &opts), Err(SktError::BranchBroken { .. })));

    let arc = ArclengthOptions { ds: 0.05, steps: 60, param_scale: 1e-3, direction: 1.0, newton: opts };
    let path = arclength_continue(&shadow, &prob, Parameter::Eta, &arc).unwrap();
    let turn = path.windows(2).position(|w| w[0].param_rate > 0.0 && w[1].param_rate <= 0.0);
    let k = turn.expect("no fold along the eta path");
    let eta_fold = path[k].point.eta;
    assert!((1e-4..1e-3).contains(&eta_fold), "fold at eta {eta_fold}");
    assert!(path[..=k].windows(2).all(|w| w[1].point.eta > w[0].point.eta));
    assert!(path.iter().all(|a| a.point.eta <= eta_fold * 1.05));
}
