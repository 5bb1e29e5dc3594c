//! The acceptance suite for the worked parameter set, shared by
//! `sktshadow verify` and the `acceptance` test target.
//!
//! Each criterion reports measured vs expected with a pass flag. Nothing here
//! adapts a tolerance to make a check pass.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{apply_l, kernel_e1, kernel_e2, neumann_eigenpair, project_p, solve_l_x0, Domain1D, EigenMode, FieldPair, FieldRole};
use crate::error::Result;
use crate::evolution::{growth_rate, GrowthOptions};
use crate::model::{h_eps, stable_increments, EpsilonContext, Params};
use crate::reduction::{build_ansatz, c0_bracket, hj, mode_integrals, reduce, Sign};
use crate::solver::{continue_branch, eta_homotopy, jacobian, residual, sup_distance, Branch, BranchPoint, NewtonOptions, StationaryProblem};
use crate::spectra::{assemble_pencil, eigen_near_zero, EigenResult};

/// Leading amplitude quoted alongside the worked set.
pub const S0_QUOTED: f64 = 0.863979;

/// `s0` for the worked set, evaluated in closed form from the two-term
/// amplitude formula with `I1 = sqrt 2` at `mu0 = 1/2`.
pub fn s0_closed_form() -> f64 {
    64.0 * (1.0 - SQRT_2 / 2.0) / PI.powi(4) + 16.0 * (SQRT_2 - 1.0) / (PI * PI)
}

/// eps ladder shared by the branch criteria.
pub const EPS_LADDER: [f64; 7] = [1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4];

/// The alpha values the full-system criterion prescribes.
pub const ALPHA_PRESCRIBED: [f64; 4] = [1e3, 2e3, 4e3, 8e3];

/// A doubling ladder inside the regime where the alpha-branch exists and is
/// linear in 1/alpha.
pub const ALPHA_LINEAR_REGIME: [f64; 4] = [6.4e4, 1.28e5, 2.56e5, 5.12e5];

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub measured: String,
    pub expected: String,
    pub note: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<3} {}: measured {} | expected {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.measured,
            self.expected
        )?;
        if !self.note.is_empty() {
            write!(f, " | {}", self.note)?;
        }
        Ok(())
    }
}

fn criterion(id: &'static str, title: &'static str, passed: bool, measured: String, expected: &str, note: String) -> Criterion {
    Criterion { id, title, passed, measured, expected: expected.to_string(), note }
}

fn errored(id: &'static str, title: &'static str, expected: &str, e: impl fmt::Display) -> Criterion {
    criterion(id, title, false, format!("error: {e}"), expected, String::new())
}

/// Worked parameters on the unit interval.
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: Params,
    pub dom: Arc<Domain1D>,
    pub mode: EigenMode,
}

impl Setup {
    pub fn worked(n: usize) -> Result<Self> {
        let dom = Arc::new(Domain1D::new(1.0, n)?);
        let mode = neumann_eigenpair(&dom, 1)?;
        Ok(Setup { params: Params::worked(), dom, mode })
    }

    pub fn problem(&self, eps: f64) -> Result<StationaryProblem> {
        StationaryProblem::new(self.params, Arc::clone(&self.dom), 1, eps, 0.0)
    }

    pub fn branch(&self, grid: &[f64], sign: Sign) -> Result<Branch> {
        continue_branch(&self.problem(grid[0])?, grid, sign, &NewtonOptions::default())
    }

    pub fn eigen(&self, pt: &BranchPoint, mu0: f64) -> Result<EigenResult> {
        eigen_near_zero(&assemble_pencil(pt, &self.problem(pt.eps)?, mu0)?)
    }
}

/// Closed-form integrals of `(1 + sqrt2 mu cos(j pi x))^-k`.
pub fn criterion_1(n: usize) -> Criterion {
    const T: &str = "closed-form integral suite";
    const E: &str = "max rel err <= 1e-10";
    let dom = match Domain1D::new(1.0, n) {
        Ok(d) => d,
        Err(e) => return errored("1", T, E, e),
    };
    let mut worst: f64 = 0.0;
    for j in 1..=3 {
        let mode = match neumann_eigenpair(&dom, j) {
            Ok(m) => m,
            Err(e) => return errored("1", T, E, e),
        };
        for mu in [-0.65, -0.5, -0.25, 0.25, 0.5, 0.65] {
            let q = match mode_integrals(mu, &mode) {
                Ok(q) => q,
                Err(e) => return errored("1", T, E, e),
            };
            let a2 = 2.0 * mu * mu;
            let exact = [1.0 / (1.0 - a2).sqrt(), (1.0 - a2).powf(-1.5), (1.0 + a2 / 2.0) * (1.0 - a2).powf(-2.5)];
            for k in 0..3 {
                worst = worst.max((q.inv[k] - exact[k]).abs() / exact[k]);
            }
        }
    }
    criterion("1", T, worst <= 1e-10, format!("{worst:.3e}"), E, "j = 1..3, |mu| in {0.25, 0.5, 0.65}, k = 1..3".into())
}

/// Reduction anchors.
pub fn criterion_2(n: usize) -> Criterion {
    const T: &str = "reduction anchors";
    const E: &str = "mu = +-0.5 (1e-10), s0 (1e-5), bracket = -2 sqrt2 (1e-8), margins > 0, det >= lower ~ 2.75e2";
    let run = || -> Result<Criterion> {
        let s = Setup::worked(n)?;
        let p = s.params;
        let s0_ref = s0_closed_form();
        let lower_ref = 2.0 * SQRT_2 * PI.powi(4);
        let mut ok = true;
        let mut parts = Vec::new();
        for (sign, mu_ref) in [(Sign::Plus, 0.5), (Sign::Minus, -0.5)] {
            let r = reduce(&p, &s.mode, sign)?;
            let q = mode_integrals(r.mu0, &s.mode)?;
            let bracket = c0_bracket(&p, &q);
            let m = r.inequalities;
            let min_margin = m.i.margin.min(m.ii.margin).min(m.iii.margin);
            let checks = [
                (r.mu0 - mu_ref).abs() <= 1e-10,
                (r.s0 - s0_ref).abs() <= 1e-5,
                (bracket + 2.0 * SQRT_2).abs() <= 1e-8,
                r.inequalities.all_hold() && min_margin > 0.0,
                r.det_value >= r.lower_bound && (r.lower_bound / lower_ref - 1.0).abs() <= 1e-8,
            ];
            ok &= checks.iter().all(|c| *c);
            parts.push(format!(
                "{}: mu0 {:.12} s0 {:.10} bracket {:.12} margins ({:.4}, {:.4}, {:.4}) det {:.6} lower {:.6}",
                sign, r.mu0, r.s0, bracket, m.i.margin, m.ii.margin, m.iii.margin, r.det_value, r.lower_bound
            ));
        }
        let note = format!(
            "s0 closed form {:.10}; the quoted 0.863979 differs by {:.1e} (arithmetic slip in the quoted digits)",
            s0_ref,
            S0_QUOTED - s0_ref
        );
        Ok(criterion("2", T, ok, parts.join("; "), E, note))
    };
    run().unwrap_or_else(|e| errored("2", T, E, e))
}

/// Residual of the two-term ansatz decays at second order.
pub fn criterion_3(n: usize) -> Criterion {
    const T: &str = "ansatz order";
    const E: &str = "empirical order >= 1.8";
    let run = || -> Result<Criterion> {
        let s = Setup::worked(n)?;
        let mut orders = Vec::new();
        let mut norms = Vec::new();
        for sign in [Sign::Plus, Sign::Minus] {
            let root = reduce(&s.params, &s.mode, sign)?;
            let ansatz = build_ansatz(&root, &s.params, &s.mode, &s.dom)?;
            let mut prev: Option<f64> = None;
            for eps in [1e-2, 5e-3, 2.5e-3] {
                let r = residual(&ansatz.guess(eps), &s.problem(eps)?)?.sup_norm();
                if let Some(pv) = prev {
                    orders.push((pv / r).log2());
                }
                norms.push(r);
                prev = Some(r);
            }
        }
        let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
        let measured = format!(
            "min order {worst:.4} (orders {}; norms {})",
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", "),
            norms.iter().map(|o| format!("{o:.3e}")).collect::<Vec<_>>().join(", ")
        );
        Ok(criterion("3", T, worst >= 1.8, measured, E, String::new()))
    };
    run().unwrap_or_else(|e| errored("3", T, E, e))
}

fn ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Blow-up asymptotics along the branch.
pub fn criterion_4(n: usize) -> Criterion {
    const T: &str = "branch asymptotics";
    const E: &str = "eps max w and max u within 2% at eps = 1e-4; successive ratios of (s-s0)/eps, (mu-mu0)/eps in [0.5, 2]";
    let run = || -> Result<Criterion> {
        let s = Setup::worked(n)?;
        let p = s.params;
        let mut ok = true;
        let mut parts = Vec::new();
        for sign in [Sign::Plus, Sign::Minus] {
            let root = reduce(&p, &s.mode, sign)?;
            let branch = s.branch(&EPS_LADDER, sign)?;
            let last = branch.points.last().expect("nonempty ladder");
            let w_ref = p.b2 / p.a2 * root.s0 * (1.0 + root.mu0.abs() * SQRT_2);
            let u_ref = p.a2 / (p.b2 * (1.0 - root.mu0.abs() * SQRT_2));
            let dw = (last.eps * last.w_max() / w_ref - 1.0).abs();
            let du = (last.u_max() / u_ref - 1.0).abs();
            let qs: Vec<f64> = branch.points.iter().map(|pt| (pt.s_eps - root.s0) / pt.eps).collect();
            let qm: Vec<f64> = branch.points.iter().map(|pt| (pt.mu_eps - root.mu0) / pt.eps).collect();
            let rs = ratios(&qs);
            let rm = ratios(&qm);
            let in_band = |r: &f64| (0.5..=2.0).contains(r);
            ok &= dw <= 0.02 && du <= 0.02 && rs.iter().all(in_band) && rm.iter().all(in_band);
            let span = |v: &[f64]| {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                format!("[{lo:.4}, {hi:.4}]")
            };
            parts.push(format!(
                "{sign}: eps max w dev {dw:.2e}, max u dev {du:.2e}, (s-s0)/eps -> {:.5} ratios {}, (mu-mu0)/eps -> {:.5} ratios {}",
                qs.last().unwrap_or(&f64::NAN),
                span(&rs),
                qm.last().unwrap_or(&f64::NAN),
                span(&rm)
            ));
        }
        Ok(criterion("4", T, ok, parts.join("; "), E, String::new()))
    };
    run().unwrap_or_else(|e| errored("4", T, E, e))
}

/// The small unstable eigenvalue and its eigenfunction.
pub fn criterion_5(n: usize) -> Criterion {
    const T: &str = "unstable eigenvalue";
    const E: &str = "sigma > 0; |sigma/(eps lambda1) - 1| <= 0.05 @1e-3, <= 0.005 @1e-4; |gamma| <= K eps; mean psi~ within 5% of pi^2/4, deviation <= 5% @1e-3";
    let run = || -> Result<Criterion> {
        let s = Setup::worked(n)?;
        let lam = s.mode.lambda();
        let target = PI * PI / 4.0;
        let mut ok = true;
        let mut parts = Vec::new();
        for sign in [Sign::Plus, Sign::Minus] {
            let root = reduce(&s.params, &s.mode, sign)?;
            let branch = s.branch(&EPS_LADDER, sign)?;
            let eig: Vec<EigenResult> = branch.points.iter().map(|pt| s.eigen(pt, root.mu0)).collect::<Result<_>>()?;
            let at = |eps: f64| {
                branch.points.iter().position(|pt| pt.eps == eps).map(|i| &eig[i]).expect("eps on ladder")
            };
            let sig_pos = eig.iter().all(|e| e.sigma > 0.0);
            let d3 = (at(1e-3).sigma / (1e-3 * lam) - 1.0).abs();
            let d4 = (at(1e-4).sigma / (1e-4 * lam) - 1.0).abs();
            let kg: Vec<f64> = branch.points.iter().zip(&eig).map(|(pt, e)| e.gamma.abs() / pt.eps).collect();
            let kmax = kg.iter().copied().fold(0.0, f64::max);
            let kmin = kg.iter().copied().fold(f64::INFINITY, f64::min);
            // |gamma|/eps bounded and not decaying to 0 faster than allowed: a consistent K
            let gamma_ok = kmax.is_finite() && kmax <= 2.0 * kmin;
            let e3 = at(1e-3);
            let mean_dev = (e3.tilde_mean / target - 1.0).abs();
            let shape = e3.tilde_dev;
            ok &= sig_pos && d3 <= 0.05 && d4 <= 0.005 && gamma_ok && mean_dev <= 0.05 && shape <= 0.05;
            parts.push(format!(
                "{sign}: min sigma {:.4e}, dev@1e-3 {d3:.3e}, dev@1e-4 {d4:.3e}, |gamma|/eps in [{kmin:.4}, {kmax:.4}], mean psi~ {:.5} (dev {mean_dev:.2e}), shape dev {shape:.2e}, max resid {:.1e}",
                eig.iter().map(|e| e.sigma).fold(f64::INFINITY, f64::min),
                e3.tilde_mean,
                eig.iter().map(|e| e.residual).fold(0.0, f64::max)
            ));
        }
        Ok(criterion("5", T, ok, parts.join("; "), E, String::new()))
    };
    run().unwrap_or_else(|e| errored("5", T, E, e))
}

/// Growth of small perturbations of the steady state in time.
pub fn criterion_6(n: usize) -> Criterion {
    const T: &str = "nonlinear instability";
    const E: &str = "|measured/sigma - 1| <= 0.1 and R^2 >= 0.999 at eps in {1e-2, 1e-3}";
    let run = || -> Result<Criterion> {
        let s = Setup::worked(n)?;
        let root = reduce(&s.params, &s.mode, Sign::Plus)?;
        let branch = s.branch(&[1e-2, 1e-3], Sign::Plus)?;
        let mut ok = true;
        let mut parts = Vec::new();
        for pt in &branch.points {
            let e = s.eigen(pt, root.mu0)?;
            let g = growth_rate(pt, &e.eigfield, e.sigma, &s.problem(pt.eps)?, &GrowthOptions::default())?;
            let dev = (g.sigma_measured / e.sigma - 1.0).abs();
            ok &= dev <= 0.1 && g.r_squared >= 0.999;
            parts.push(format!(
                "eps {:.0e}: measured {:.6e} vs sigma {:.6e} (dev {dev:.2e}), R^2 {:.6}, {} steps",
                pt.eps, g.sigma_measured, e.sigma, g.r_squared, g.steps
            ));
        }
        Ok(criterion("6", T, ok, parts.join("; "), E, "linearly implicit Euler, dt = 0.01/sigma, plus sign".into()))
    };
    run().unwrap_or_else(|e| errored("6", T, E, e))
}

/// Full-system steady states at each alpha and their distance to the shadow state.
struct AlphaStudy {
    /// (alpha, sup|u_alpha - u_shadow|, sigma relative deviation) or the failure text.
    rows: Vec<(f64, std::result::Result<(f64, f64), String>)>,
}

fn alpha_study(n: usize, alphas: &[f64]) -> Result<AlphaStudy> {
    let s = Setup::worked(n)?;
    let root = reduce(&s.params, &s.mode, Sign::Plus)?;
    let shadow = s.branch(&[1e-2], Sign::Plus)?.points.remove(0);
    let sigma0 = s.eigen(&shadow, root.mu0)?.sigma;
    let prob = s.problem(1e-2)?;
    let mut rows = Vec::new();
    for &alpha in alphas {
        let res = eta_homotopy(&shadow, &prob, &[alpha], Sign::Plus, &NewtonOptions::default())
            .and_then(|b| {
                let pt = &b.points[0];
                let e = s.eigen(pt, root.mu0)?;
                Ok((sup_distance(&pt.u, &shadow.u), (e.sigma / sigma0 - 1.0).abs()))
            })
            .map_err(|e| e.to_string());
        rows.push((alpha, res));
    }
    Ok(AlphaStudy { rows })
}

fn judge_alpha(study: &AlphaStudy) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut prev: Option<f64> = None;
    for (alpha, res) in &study.rows {
        match res {
            Ok((dist, sdev)) => {
                let ratio = prev.map(|p| dist / p);
                if let Some(r) = ratio {
                    ok &= (r - 0.5).abs() <= 0.15;
                }
                ok &= *sdev <= 0.1;
                parts.push(format!(
                    "alpha {alpha:.3e}: |u_a - u_sh| {dist:.4e}{} sigma dev {sdev:.2e}",
                    ratio.map(|r| format!(" (ratio {r:.4}),")).unwrap_or_else(|| ",".into())
                ));
                prev = Some(*dist);
            }
            Err(e) => {
                ok = false;
                prev = None;
                parts.push(format!("alpha {alpha:.3e}: no steady state ({e})"));
            }
        }
    }
    (ok, parts.join("; "))
}

/// Full-system perturbation at the prescribed alpha values.
pub fn criterion_7(n: usize) -> Criterion {
    const T: &str = "full-system perturbation";
    const E: &str = "at eps = 1e-2, alpha in {1e3, 2e3, 4e3, 8e3}: distance ratio 0.5 +- 0.15 per doubling, sigma within 10%";
    match alpha_study(n, &ALPHA_PRESCRIBED) {
        Ok(st) => {
            let (ok, measured) = judge_alpha(&st);
            let note = if ok {
                String::new()
            } else {
                "the alpha-branch from the shadow state folds near alpha ~ 3.4e3 at eps = 1e-2, so alpha = 1e3, 2e3 have no continued state and 4e3, 8e3 sit on the strongly nonlinear part; see 7s".into()
            };
            criterion("7", T, ok, measured, E, note)
        }
        Err(e) => errored("7", T, E, e),
    }
}

/// The same study in the regime where the alpha-branch is linear in 1/alpha.
/// Reported separately; it does not replace criterion 7.
pub fn criterion_7_supplementary(n: usize) -> Criterion {
    const T: &str = "full-system perturbation, linear regime (supplementary)";
    const E: &str = "at eps = 1e-2, alpha in {6.4e4 .. 5.12e5}: ratio 0.5 +- 0.15, sigma within 10%";
    match alpha_study(n, &ALPHA_LINEAR_REGIME) {
        Ok(st) => {
            let (ok, measured) = judge_alpha(&st);
            criterion("7s", T, ok, measured, E, String::new())
        }
        Err(e) => errored("7s", T, E, e),
    }
}

fn random_x0(dom: &Domain1D, mode: &EigenMode, p: &Params, rng: &mut ChaCha8Rng) -> FieldPair {
    let n = dom.n();
    let decay = |m: usize| 1.0 / (1.0 + (m * m) as f64);
    let mut c1: Vec<f64> = (0..n).map(|m| rng.gen_range(-1.0..1.0) * decay(m)).collect();
    let mut c2: Vec<f64> = (0..n).map(|m| rng.gen_range(-1.0..1.0) * decay(m)).collect();
    c1[0] = 0.0;
    c2[0] = 0.0;
    c2[mode.j()] = p.kernel_slope() * c1[mode.j()];
    FieldPair::from_coeffs(dom, c1, c2, FieldRole::State)
}

fn ulps(a: f64, b: f64) -> f64 {
    (a - b).abs() / (f64::EPSILON * b.abs().max(f64::MIN_POSITIVE))
}

/// Structural identities of every module at their stated tolerances.
pub fn criterion_8(n: usize) -> Criterion {
    const T: &str = "structural suites";
    const E: &str = "kernel <= 1e-12, Fredholm <= 1e-12, inverse <= 1e-10, round trip <= 8 ulps, increments <= 4 ulps, h_j suite, Jacobian vs FD <= 1e-6";
    let run = || -> Result<Criterion> {
        let s = Setup::worked(n)?;
        let p = s.params;
        let (dom, mode) = (&*s.dom, &s.mode);
        let mut rng = ChaCha8Rng::seed_from_u64(20240611);
        let mut fails = Vec::new();

        // basis
        let kern = apply_l(&kernel_e1(dom, &p), mode, &p, dom)
            .sup_norm()
            .max(apply_l(&kernel_e2(dom, mode), mode, &p, dom).sup_norm());
        let mut fredholm: f64 = 0.0;
        let mut inverse: f64 = 0.0;
        for _ in 0..100 {
            let x = random_x0(dom, mode, &p, &mut rng);
            let lx = apply_l(&x, mode, &p, dom);
            let proj = project_p(&lx, mode, &p);
            fredholm = fredholm.max(proj.s.abs()).max(proj.t.abs());
            let back = solve_l_x0(&lx, mode, &p, dom)?;
            inverse = inverse.max(sup_distance(back.stacked().as_slice(), x.stacked().as_slice()) / x.coeff_sup_norm());
        }
        if kern > 1e-12 {
            fails.push("kernel");
        }
        if fredholm > 1e-12 {
            fails.push("fredholm");
        }
        if inverse > 1e-10 {
            fails.push("inverse");
        }

        // model
        let mut round: f64 = 0.0;
        let mut incr: f64 = 0.0;
        let mut incr_summand: f64 = 0.0;
        for _ in 0..2000 {
            let beta = rng.gen_range(0.0..2.0);
            let phi = rng.gen_range(0.0..5.0);
            let psi = beta * phi + rng.gen_range(0.05..5.0);
            let eps = 10f64.powf(rng.gen_range(-12.0..0.0));
            let q = Params { beta, ..p };
            let ctx = EpsilonContext::new(1, mode.lambda(), eps.min(0.99 * q.a2 / mode.lambda()), &q)?;
            let eps = ctx.eps();
            let (u, w) = h_eps(phi, psi, &ctx, &q)?;
            round = round.max(ulps((eps + w) * u, phi));
            round = round.max(ulps((1.0 + beta * u) * w, psi));
            let d = psi - beta * phi;
            let (r1, r2) = stable_increments(phi, psi, eps, beta)?;
            let (h10, h20) = (phi / d, d);
            let (s1, s2) = (h10 + eps * r1, h20 + eps * r2);
            incr = incr.max(ulps(s1, u)).max(ulps(s2, w));
            // the same defect in ulps of the largest summand, i.e. net of cancellation
            let scale1 = h10.abs().max((eps * r1).abs()).max(u.abs());
            let scale2 = h20.abs().max((eps * r2).abs()).max(w.abs());
            incr_summand = incr_summand
                .max((s1 - u).abs() / (f64::EPSILON * scale1))
                .max((s2 - w).abs() / (f64::EPSILON * scale2));
        }
        if round > 8.0 {
            fails.push("round trip");
        }
        if incr > 4.0 {
            fails.push("increments");
        }

        // reduction
        let h0 = hj(0.0, mode)?;
        let mut mono = true;
        for k in 0..50 {
            let mu = -0.69 + 1.38 * (k as f64 + 0.5) / 50.0;
            let dh = hj(mu + 1e-5, mode)? - hj(mu - 1e-5, mode)?;
            mono &= mu * dh > 0.0;
        }
        let dh0 = (hj(1e-6, mode)? - hj(-1e-6, mode)?) / 2e-6;
        let width = mode.m_upper() - mode.m_lower();
        let blow = hj(mode.m_upper() - 1e-4 * width, mode)?.min(hj(mode.m_lower() + 1e-4 * width, mode)?);
        if h0 != 1.0 {
            fails.push("h_j(0)");
        }
        if dh0.abs() > 1e-8 {
            fails.push("h_j'(0)");
        }
        if !mono {
            fails.push("h_j monotone");
        }
        if !(blow > 1e3) {
            fails.push("h_j blow-up");
        }

        // solver
        let pt = s.branch(&[1e-2], Sign::Plus)?.points.remove(0);
        let prob = s.problem(1e-2)?;
        let jac = jacobian(&pt.phi, &prob)?;
        let mut jfd: f64 = 0.0;
        for _ in 0..5 {
            let v = random_x0(dom, mode, &p, &mut rng).stacked();
            let h = 1e-6 * pt.phi.coeff_sup_norm() / v.amax();
            let plus = FieldPair::from_stacked(dom, &(pt.phi.stacked() + &v * h), FieldRole::State);
            let minus = FieldPair::from_stacked(dom, &(pt.phi.stacked() - &v * h), FieldRole::State);
            let fd: DVector<f64> = (residual(&plus, &prob)?.stacked() - residual(&minus, &prob)?.stacked()) / (2.0 * h);
            let jv = &jac * &v;
            jfd = jfd.max((jv - &fd).amax() / fd.amax());
        }
        if jfd > 1e-6 {
            fails.push("jacobian");
        }

        let measured = format!(
            "kernel {kern:.1e}, fredholm {fredholm:.1e}, inverse {inverse:.1e}, round trip {round:.1} ulps, increments {incr:.1} ulps of h_eps ({incr_summand:.1} ulps of the largest summand), h_j(0) = {h0}, h_j'(0) {dh0:.1e}, monotone {mono}, endpoint h_j {blow:.3e}, Jacobian vs FD {jfd:.1e}"
        );
        let mut note = if fails.is_empty() { String::new() } else { format!("failing: {}", fails.join(", ")) };
        if incr > 4.0 {
            note.push_str(
                "; increment defect exceeds 4 ulps of h_eps only where h10 + eps rho is a cancelling sum (h_eps << h10): the rounding of the summands is then many ulps of the result",
            );
        }
        Ok(criterion("8", T, fails.is_empty(), measured, E, note))
    };
    run().unwrap_or_else(|e| errored("8", T, E, e))
}

/// Criteria 1-8 plus the supplementary full-system line, in order.
pub fn run_all(n: usize) -> Vec<Criterion> {
    vec![
        criterion_1(n),
        criterion_2(n),
        criterion_3(n),
        criterion_4(n),
        criterion_5(n),
        criterion_6(n),
        criterion_7(n),
        criterion_7_supplementary(n),
        criterion_8(n),
    ]
}
