use std::sync::Arc;

use sktshadow::basis::neumann_eigenpair;
use sktshadow::evolution::{
    direction_to_uw, growth_rate, linear_fit, step_shadow, step_skt, EvolutionRhs, EvolutionState, GrowthExit,
    GrowthOptions, LinearlyImplicit, Scheme,
};
use sktshadow::reduction::reduce;
use sktshadow::solver::continue_branch;
use sktshadow::spectra::{assemble_pencil, eigen_near_zero, eigenpair_near, pencil_spectrum};
use sktshadow::{BranchPoint, Domain1D, EigenResult, NewtonOptions, Params, Sign, SktError, StationaryProblem};

fn dom(n: usize) -> Arc<Domain1D> {
    Arc::new(Domain1D::new(1.0, n).unwrap())
}

struct Steady {
    prob: StationaryProblem,
    point: BranchPoint,
    eigen: EigenResult,
}

fn steady(d: &Arc<Domain1D>, eps: f64) -> Steady {
    let p = Params::worked();
    let prob = StationaryProblem::new(p, d.clone(), 1, eps, 0.0).unwrap();
    let point = continue_branch(&prob, &[eps], Sign::Plus, &NewtonOptions::default()).unwrap().points.remove(0);
    let mu0 = reduce(&p, prob.mode(), Sign::Plus).unwrap().mu0;
    let eigen = eigen_near_zero(&assemble_pencil(&point, &prob, mu0).unwrap()).unwrap();
    Steady { prob, point, eigen }
}

#[test]
fn state_validation() {
    assert!(matches!(EvolutionState::new(vec![1.0, -1e-3], vec![0.0, 0.0], 0.1), Err(SktError::PositivityLoss { node: 1 })));
    assert!(matches!(EvolutionState::new(vec![1.0], vec![1.0], 0.0), Err(SktError::InvalidParams(_))));
    assert!(matches!(EvolutionState::new(vec![1.0], vec![1.0, 2.0], 0.1), Err(SktError::InvalidParams(_))));
    let d = dom(64);
    let s = EvolutionState::new(vec![1.0; 64], vec![1.0; 64], 1e-3).unwrap();
    assert!(matches!(step_skt(&s, &Params::worked(), 0.1, 0.0, &d), Err(SktError::InvalidParams(_))));
}

#[test]
fn semitrivial_equilibrium_is_fixed() {
    let d = dom(64);
    let p = Params::worked();
    let mut s = EvolutionState::new(vec![p.a1 / p.b1; 64], vec![0.0; 64], 1e-3).unwrap();
    for _ in 0..50 {
        s = step_shadow(&s, &p, 0.1, &d).unwrap();
    }
    let drift = s.u.iter().map(|u| (u - 4.0).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-12, "drift {drift:e}");
    assert!(s.w.iter().all(|w| *w == 0.0));
    assert!((s.t - 0.05).abs() < 1e-15);
}

#[test]
fn branch_points_are_steady_for_both_schemes() {
    let d = dom(128);
    let st = steady(&d, 1e-2);
    let p = *st.prob.params();
    let rhs = EvolutionRhs { params: &p, d2: st.point.d2, eta: 0.0, dom: &d };
    let (fu, fw) = rhs.eval(&st.point.u, &st.point.w);
    let scale = st.point.w_max();
    assert!(fu.iter().chain(&fw).all(|v| v.abs() <= 1e-8 * scale), "stationary residual");

    let start = EvolutionState::from_point(&st.point, 1e-4).unwrap();
    let mut s = start.clone();
    for _ in 0..100 {
        s = step_shadow(&s, &p, st.point.d2, &d).unwrap();
    }
    assert!(s.distance(&start) <= 1e-8, "frozen drift {:e}", s.distance(&start));
    assert_eq!(s.scheme, Scheme::FrozenCoefficient);

    let lin = LinearlyImplicit::new(rhs, &start.u, &start.w, 1e-4);
    let mut s = start.clone();
    for _ in 0..100 {
        s = lin.step(&s).unwrap();
    }
    assert!(s.distance(&start) <= 1e-8, "linearly implicit drift {:e}", s.distance(&start));
    assert_eq!(s.scheme, Scheme::LinearlyImplicit);
}

fn transient(d: &Domain1D) -> (Vec<f64>, Vec<f64>) {
    let u = d.nodes().iter().map(|x| 2.0 + 0.5 * (std::f64::consts::PI * x).cos()).collect();
    let w = d.nodes().iter().map(|x| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x).cos()).collect();
    (u, w)
}

fn integrate_to(d: &Domain1D, p: &Params, d2: f64, alpha: Option<f64>, dt: f64, t_end: f64) -> EvolutionState {
    let (u, w) = transient(d);
    let mut s = EvolutionState::new(u, w, dt).unwrap();
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        s = match alpha {
            Some(a) => step_skt(&s, p, d2, a, d).unwrap(),
            None => step_shadow(&s, p, d2, d).unwrap(),
        };
    }
    s
}

#[test]
fn frozen_scheme_is_first_order() {
    let d = dom(64);
    let p = Params { beta: 0.5, ..Params::worked() };
    let t = 0.05;
    let reference = integrate_to(&d, &p, 0.1, None, t / 6400.0, t);
    let e1 = integrate_to(&d, &p, 0.1, None, t / 50.0, t).distance(&reference);
    let e2 = integrate_to(&d, &p, 0.1, None, t / 100.0, t).distance(&reference);
    let e3 = integrate_to(&d, &p, 0.1, None, t / 200.0, t).distance(&reference);
    for r in [e1 / e2, e2 / e3] {
        assert!((1.8..=2.2).contains(&r), "ratios {} {}", e1 / e2, e2 / e3);
    }
}

#[test]
fn infinite_alpha_is_the_shadow_step() {
    let d = dom(64);
    let p = Params::worked();
    let (u, w) = transient(&d);
    let s = EvolutionState::new(u, w, 1e-3).unwrap();
    assert_eq!(step_skt(&s, &p, 0.1, f64::INFINITY, &d).unwrap(), step_shadow(&s, &p, 0.1, &d).unwrap());
}

#[test]
fn pure_cross_diffusion_conserves_mass() {
    let d = dom(64);
    // a1 = b1 = c1 = 0 leaves the u-equation in divergence form
    let p = Params { a1: 0.0, b1: 0.0, c1: 0.0, beta: 0.0, ..Params::worked() };
    let (u, w) = transient(&d);
    let mut s = EvolutionState::new(u, w, 1e-3).unwrap();
    let m0 = d.integrate(&s.u);
    for _ in 0..200 {
        s = step_skt(&s, &p, 0.1, 50.0, &d).unwrap();
        assert!((d.integrate(&s.u) - m0).abs() <= 1e-12 * m0);
    }
}

#[test]
fn full_system_trajectory_approaches_the_shadow_one() {
    let d = dom(64);
    let p = Params::worked();
    let d2 = 0.15;
    let shadow = integrate_to(&d, &p, d2, None, 1e-3, 0.1);
    let a = integrate_to(&d, &p, d2, Some(1e4), 1e-3, 0.1);
    let b = integrate_to(&d, &p, d2, Some(2e4), 1e-3, 0.1);
    let (da, db) = (a.distance(&shadow), b.distance(&shadow));
    assert!(da > 0.0 && (db / da - 0.5).abs() <= 0.05, "{da:e} {db:e}");
    assert!(da * 1e4 < 10.0, "K = {}", da * 1e4);
}

#[test]
fn unstable_direction_grows_at_sigma() {
    let d = dom(128);
    let st = steady(&d, 1e-2);
    let opts = GrowthOptions::default();
    let g = growth_rate(&st.point, &st.eigen.eigfield, st.eigen.sigma, &st.prob, &opts).unwrap();
    assert!((g.sigma_measured / st.eigen.sigma - 1.0).abs() <= 0.1, "{} vs {}", g.sigma_measured, st.eigen.sigma);
    assert!(g.r_squared >= 0.999);
    assert_eq!(g.exit, GrowthExit::GrowthReached);
    assert!((g.dt - 0.01 / st.eigen.sigma).abs() < 1e-15);
    assert_eq!(g.series.len(), g.steps + 1);
    let last = g.series.last().unwrap();
    assert!(last.pert_norm >= 1e3 * g.series[0].pert_norm);
    let steady_norm = EvolutionState::from_point(&st.point, g.dt).unwrap().sup_norm();
    assert!(g.series.iter().all(|s| s.pert_norm <= opts.amplitude_cap * steady_norm));

    let flipped = st.eigen.eigfield.scaled(-1.0);
    let gm = growth_rate(&st.point, &flipped, st.eigen.sigma, &st.prob, &opts).unwrap();
    assert!((gm.sigma_measured / g.sigma_measured - 1.0).abs() <= 0.01);

    let fine = GrowthOptions { dt_factor: 0.005, ..opts };
    let gf = growth_rate(&st.point, &st.eigen.eigfield, st.eigen.sigma, &st.prob, &fine).unwrap();
    assert!((gf.sigma_measured / g.sigma_measured - 1.0).abs() <= 0.01);
}

#[test]
fn stable_direction_does_not_grow() {
    let d = dom(128);
    let st = steady(&d, 1e-2);
    let mu0 = reduce(st.prob.params(), st.prob.mode(), Sign::Plus).unwrap().mu0;
    let pencil = assemble_pencil(&st.point, &st.prob, mu0).unwrap();
    let spec = pencil_spectrum(&pencil.a, &pencil.t, st.point.eps * st.prob.mode().lambda()).unwrap();
    // least stable real negative eigenvalue
    let stable = spec
        .iter()
        .filter(|z| z.im.abs() <= 1e-8 * z.norm() && z.re < -1e-3)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    // shift slightly off the eigenvalue so the shifted pencil stays invertible
    let (sigma_s, dir) = eigenpair_near(&pencil, stable * (1.0 + 1e-6)).unwrap();
    assert!(sigma_s < 0.0);
    let err = growth_rate(&st.point, &dir, st.eigen.sigma, &st.prob, &GrowthOptions::default()).unwrap_err();
    assert!(matches!(err, SktError::NoGrowth { .. }), "{err:?}");
}

#[test]
fn growth_input_checks() {
    let d = dom(64);
    let st = steady(&d, 1e-2);
    for bad in [1e-10, 1e-4] {
        let opts = GrowthOptions { delta_rel: bad, ..GrowthOptions::default() };
        assert!(matches!(
            growth_rate(&st.point, &st.eigen.eigfield, st.eigen.sigma, &st.prob, &opts),
            Err(SktError::InvalidParams(_))
        ));
    }
    assert!(matches!(
        growth_rate(&st.point, &st.eigen.eigfield, -1.0, &st.prob, &GrowthOptions::default()),
        Err(SktError::InvalidParams(_))
    ));
    let zero = st.eigen.eigfield.scaled(0.0);
    assert!(matches!(
        growth_rate(&st.point, &zero, st.eigen.sigma, &st.prob, &GrowthOptions::default()),
        Err(SktError::Singular(_))
    ));
}

/// The (u, w) direction is the linearization of the inverse change of variables.
#[test]
fn direction_mapping_matches_difference_of_inverse() {
    let d = dom(64);
    let st = steady(&d, 1e-2);
    let (du, dw) = direction_to_uw(&st.point, &st.eigen.eigfield, &st.prob).unwrap();
    let h = 1e-6;
    let moved = st.point.phi.axpy(h, &st.eigen.eigfield);
    let m = neumann_eigenpair(&d, 1).unwrap();
    assert_eq!(m.lambda(), st.prob.mode().lambda());
    for k in [0, 20, 63] {
        let (u1, w1) = sktshadow::model::h_eps(moved.first()[k], moved.second()[k], st.prob.ctx(), st.prob.params()).unwrap();
        let fu = (u1 - st.point.u[k]) / h;
        let fw = (w1 / st.point.eps - st.point.w[k]) / h;
        assert!((fu - du[k]).abs() <= 1e-4 * du[k].abs().max(1e-3), "du node {k}");
        assert!((fw - dw[k]).abs() <= 1e-4 * dw[k].abs().max(1e-3), "dw node {k}");
    }
}

#[test]
fn line_fit_recovers_slope() {
    let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
    let y: Vec<f64> = t.iter().map(|t| 3.0 - 0.7 * t).collect();
    let (slope, r2) = linear_fit(&t, &y);
    assert!((slope + 0.7).abs() < 1e-13 && (r2 - 1.0).abs() < 1e-13);
}
