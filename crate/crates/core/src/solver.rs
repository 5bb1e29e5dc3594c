//! Newton solution and continuation of the transformed stationary system
//! `L Phi + eps F(Phi, eps) - eta R(Phi, eps) = 0`.
//!
//! The unknown is the stacked cosine-coefficient vector `[c_phi; c_psi]`;
//! nonlinear terms are evaluated pseudo-spectrally on the (optionally
//! oversampled) evaluation grid.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::Serialize;

use crate::basis::{kernel_coordinates, neumann_eigenpair, operator_symbol, Domain1D, EigenMode, FieldPair, FieldRole};
use crate::error::{Result, SktError};
use crate::model::{EpsilonContext, Local, Params};
use crate::reduction::{build_ansatz, reduce, Sign};

/// One stationary problem at fixed (eps, eta).
#[derive(Debug, Clone)]
pub struct StationaryProblem {
    params: Params,
    mode: EigenMode,
    ctx: EpsilonContext,
    eta: f64,
    dom: Arc<Domain1D>,
}

impl StationaryProblem {
    pub fn new(params: Params, dom: Arc<Domain1D>, j: usize, eps: f64, eta: f64) -> Result<Self> {
        params.validate()?;
        let mode = neumann_eigenpair(&dom, j)?;
        let ctx = EpsilonContext::new(j, mode.lambda(), eps, &params)?;
        check_eta(eps, eta)?;
        Ok(StationaryProblem { params, mode, ctx, eta, dom })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        check_eta(eps, self.eta)?;
        Ok(StationaryProblem { ctx: self.ctx.with_eps(eps, &self.params)?, ..self.clone() })
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        check_eta(self.ctx.eps(), eta)?;
        Ok(StationaryProblem { eta, ..self.clone() })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn mode(&self) -> &EigenMode {
        &self.mode
    }

    pub fn ctx(&self) -> &EpsilonContext {
        &self.ctx
    }

    pub fn eps(&self) -> f64 {
        self.ctx.eps()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dom(&self) -> &Domain1D {
        &self.dom
    }

    pub fn dom_arc(&self) -> Arc<Domain1D> {
        Arc::clone(&self.dom)
    }
}

fn check_eta(eps: f64, eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(SktError::ContextInvalid(format!("eta = {eta} must be nonnegative")));
    }
    if eta > 0.0 && eps == 0.0 {
        return Err(SktError::ContextInvalid("eta > 0 requires eps > 0".into()));
    }
    Ok(())
}

/// How the pointwise derivative blocks are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Derivatives {
    /// Closed-form chain rule; falls back to differences at nodes where the
    /// closed form is not finite.
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Absolute tolerance on the coefficient-space sup norm, multiplied by `max(1, |Phi|_inf)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest admissible line-search factor.
    pub min_step: f64,
    /// Sufficient-decrease constant of the line search.
    pub armijo: f64,
    pub derivatives: Derivatives,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-11, max_iter: 30, min_step: 1e-12, armijo: 1e-4, derivatives: Derivatives::Analytic }
    }
}

/// A converged stationary state with its reduced coordinates and physical fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPoint {
    pub eps: f64,
    pub eta: f64,
    pub d2: f64,
    #[serde(skip)]
    pub phi: FieldPair,
    pub s_eps: f64,
    pub mu_eps: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub sigma: Option<f64>,
    #[serde(skip)]
    pub u: Vec<f64>,
    /// The rescaled second species `w = w~/eps`.
    #[serde(skip)]
    pub w: Vec<f64>,
}

impl BranchPoint {
    /// alpha = 1/eta, infinite on the shadow branch.
    pub fn alpha(&self) -> f64 {
        if self.eta > 0.0 {
            1.0 / self.eta
        } else {
            f64::INFINITY
        }
    }

    /// Original second species `v = w / alpha` (only meaningful for eta > 0).
    pub fn v(&self) -> Vec<f64> {
        self.w.iter().map(|w| w * self.eta).collect()
    }

    pub fn u_min(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn u_max(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn w_max(&self) -> f64 {
        self.w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Which scalar is varied along a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Epsilon,
    Eta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub sign: Sign,
    pub j: usize,
    pub parameter: Parameter,
    pub points: Vec<BranchPoint>,
}

/// Pointwise terms on the evaluation grid.
struct NodalTerms {
    /// eps f - eta r, per component
    forcing: [Vec<f64>; 2],
    /// d(eps f - eta r)/d(phi, psi), when requested
    blocks: Option<Vec<Matrix2<f64>>>,
}

fn eval_values(phi: &FieldPair, dom: &Domain1D) -> (Vec<f64>, Vec<f64>) {
    if dom.is_dealiased() {
        let a = (dom.to_eval_matrix() * DVector::from_column_slice(phi.first_coeffs())).data.into();
        let b = (dom.to_eval_matrix() * DVector::from_column_slice(phi.second_coeffs())).data.into();
        (a, b)
    } else {
        (phi.first().to_vec(), phi.second().to_vec())
    }
}

fn local_at(phi: f64, psi: f64, node: usize, prob: &StationaryProblem) -> Result<Local> {
    if !(phi > 0.0) {
        return Err(SktError::PositivityLoss { node });
    }
    Local::new(phi, psi, &prob.ctx, &prob.params).map_err(|_| SktError::PositivityLoss { node })
}

fn forcing_at(loc: &Local, prob: &StationaryProblem) -> [f64; 2] {
    let eps = prob.eps();
    let (f1, f2) = loc.f();
    let mut out = [eps * f1, eps * f2];
    if prob.eta > 0.0 {
        let (r1, r2) = loc.r();
        out[0] -= prob.eta * r1;
        out[1] -= prob.eta * r2;
    }
    out
}

fn fd_block(phi: f64, psi: f64, node: usize, prob: &StationaryProblem) -> Result<Matrix2<f64>> {
    let h = 1e-6 * phi.abs().max(psi.abs()).max(1.0);
    let mut m = Matrix2::zeros();
    for (col, (dp, dq)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
        let plus = forcing_at(&local_at(phi + dp, psi + dq, node, prob)?, prob);
        let minus = forcing_at(&local_at(phi - dp, psi - dq, node, prob)?, prob);
        m[(0, col)] = (plus[0] - minus[0]) / (2.0 * h);
        m[(1, col)] = (plus[1] - minus[1]) / (2.0 * h);
    }
    Ok(m)
}

fn nodal_terms(phi: &FieldPair, prob: &StationaryProblem, derivs: Option<Derivatives>) -> Result<NodalTerms> {
    let (a, b) = eval_values(phi, &prob.dom);
    let m = a.len();
    let mut forcing = [vec![0.0; m], vec![0.0; m]];
    let mut blocks = derivs.map(|_| Vec::with_capacity(m));
    let eps = prob.eps();
    for node in 0..m {
        let loc = local_at(a[node], b[node], node, prob)?;
        if eps == 0.0 && prob.eta == 0.0 {
            continue;
        }
        let f = forcing_at(&loc, prob);
        forcing[0][node] = f[0];
        forcing[1][node] = f[1];
        if let (Some(kind), Some(out)) = (derivs, blocks.as_mut()) {
            let analytic = || {
                let mut d = loc.df() * eps;
                if prob.eta > 0.0 {
                    d -= loc.dr() * prob.eta;
                }
                d
            };
            let block = match kind {
                Derivatives::Analytic => {
                    let d = analytic();
                    if d.iter().all(|v| v.is_finite()) {
                        d
                    } else {
                        fd_block(a[node], b[node], node, prob)?
                    }
                }
                Derivatives::FiniteDifference => fd_block(a[node], b[node], node, prob)?,
            };
            out.push(block);
        }
    }
    if let Some(out) = blocks.as_mut() {
        if out.is_empty() {
            out.resize(m, Matrix2::zeros());
        }
    }
    Ok(NodalTerms { forcing, blocks })
}

fn project_forcing(values: &[f64], dom: &Domain1D) -> DVector<f64> {
    dom.from_eval_matrix() * DVector::from_column_slice(values)
}

fn residual_vector(phi: &FieldPair, prob: &StationaryProblem) -> Result<DVector<f64>> {
    let terms = nodal_terms(phi, prob, None)?;
    let n = prob.dom.n();
    let sym = operator_symbol(&prob.dom, &prob.mode, &prob.params);
    let g1 = project_forcing(&terms.forcing[0], &prob.dom);
    let g2 = project_forcing(&terms.forcing[1], &prob.dom);
    let (c1, c2) = (phi.first_coeffs(), phi.second_coeffs());
    let mut r = DVector::zeros(2 * n);
    for m in 0..n {
        let (l11, l21, l22) = sym[m];
        r[m] = l11 * c1[m] + g1[m];
        r[n + m] = l21 * c1[m] + l22 * c2[m] + g2[m];
    }
    Ok(r)
}

/// `L Phi + eps F(Phi) - eta R(Phi)` as a field.
pub fn residual(phi: &FieldPair, prob: &StationaryProblem) -> Result<FieldPair> {
    let r = residual_vector(phi, prob)?;
    Ok(FieldPair::from_stacked(&prob.dom, &r, FieldRole::Residual))
}

/// Dense `from_eval * diag(v) * to_eval`.
pub(crate) fn pseudo_spectral_block(v: &[f64], dom: &Domain1D) -> DMatrix<f64> {
    let mut left = dom.from_eval_matrix().clone();
    for (k, vk) in v.iter().enumerate() {
        left.column_mut(k).scale_mut(*vk);
    }
    left * dom.to_eval_matrix()
}

/// Assemble a 2n x 2n coefficient-space operator from nodal 2x2 blocks.
pub(crate) fn assemble_blocks(blocks: &[Matrix2<f64>], dom: &Domain1D) -> DMatrix<f64> {
    let n = dom.n();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..2 {
        for b in 0..2 {
            let v: Vec<f64> = blocks.iter().map(|m| m[(a, b)]).collect();
            if v.iter().all(|x| *x == 0.0) {
                continue;
            }
            out.view_mut((a * n, b * n), (n, n)).copy_from(&pseudo_spectral_block(&v, dom));
        }
    }
    out
}

/// Dense coefficient-space Jacobian of the residual.
pub fn jacobian(phi: &FieldPair, prob: &StationaryProblem) -> Result<DMatrix<f64>> {
    jacobian_with(phi, prob, Derivatives::Analytic)
}

pub fn jacobian_with(phi: &FieldPair, prob: &StationaryProblem, kind: Derivatives) -> Result<DMatrix<f64>> {
    let terms = nodal_terms(phi, prob, Some(kind))?;
    let n = prob.dom.n();
    let mut jac = assemble_blocks(terms.blocks.as_deref().unwrap_or(&[]), &prob.dom);
    if jac.nrows() == 0 {
        jac = DMatrix::zeros(2 * n, 2 * n);
    }
    add_operator(&mut jac, prob);
    Ok(jac)
}

fn add_operator(jac: &mut DMatrix<f64>, prob: &StationaryProblem) {
    let n = prob.dom.n();
    for (m, (l11, l21, l22)) in operator_symbol(&prob.dom, &prob.mode, &prob.params).into_iter().enumerate() {
        jac[(m, m)] += l11;
        jac[(n + m, m)] += l21;
        jac[(n + m, n + m)] += l22;
    }
}

/// Pointwise derivative blocks of `eps F - eta R` on the evaluation grid.
pub fn forcing_blocks(phi: &FieldPair, prob: &StationaryProblem) -> Result<Vec<Matrix2<f64>>> {
    Ok(nodal_terms(phi, prob, Some(Derivatives::Analytic))?.blocks.unwrap_or_default())
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

enum StepFailure {
    Positivity(usize),
    Decrease,
}

/// Damped Newton from `initial`; requires eps > 0.
pub fn newton(initial: &FieldPair, prob: &StationaryProblem, opts: &NewtonOptions) -> Result<BranchPoint> {
    if prob.eps() == 0.0 {
        return Err(SktError::EpsilonZero);
    }
    let dom = prob.dom();
    let mut x = initial.clone().with_role(FieldRole::State);
    let mut r = residual_vector(&x, prob)?;
    let mut norm = sup(&r);
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        if !norm.is_finite() {
            break;
        }
        if norm <= opts.tol * x.sup_norm().max(1.0) {
            return make_point(x, prob, it, norm);
        }
        let jac = jacobian_with(&x, prob, opts.derivatives)?;
        let dx = jac.lu().solve(&(-&r)).ok_or(SktError::Singular("Newton step"))?;
        let base = x.stacked();
        let mut lam = 1.0;
        let mut failure;
        loop {
            let cand = FieldPair::from_stacked(dom, &(&base + &dx * lam), FieldRole::State);
            match residual_vector(&cand, prob) {
                Ok(rc) => {
                    let nc = sup(&rc);
                    if nc <= (1.0 - opts.armijo * lam) * norm {
                        x = cand;
                        r = rc;
                        norm = nc;
                        break;
                    }
                    failure = StepFailure::Decrease;
                }
                Err(SktError::PositivityLoss { node }) => failure = StepFailure::Positivity(node),
                Err(e) => return Err(e),
            }
            lam *= 0.5;
            if lam < opts.min_step {
                return Err(match failure {
                    StepFailure::Positivity(node) => SktError::PositivityLoss { node },
                    StepFailure::Decrease => SktError::NoConvergence { iterations: it, final_norm: norm },
                });
            }
        }
    }
    if norm <= opts.tol * x.sup_norm().max(1.0) {
        return make_point(x, prob, it, norm);
    }
    Err(SktError::NoConvergence { iterations: it, final_norm: norm })
}

/// Wrap a solved state with its reduced coordinates and physical fields.
pub fn make_point(phi: FieldPair, prob: &StationaryProblem, iterations: usize, residual_norm: f64) -> Result<BranchPoint> {
    let p = prob.params();
    let (s, t) = kernel_coordinates(&phi, prob.mode(), p);
    let mu = t * p.a2 / (p.b2 * s);
    let eps = prob.eps();
    let mut u = Vec::with_capacity(phi.len());
    let mut w = Vec::with_capacity(phi.len());
    for (node, (&a, &b)) in phi.first().iter().zip(phi.second()).enumerate() {
        let loc = local_at(a, b, node, prob)?;
        u.push(loc.u());
        w.push(if eps > 0.0 { loc.w_tilde() / eps } else { f64::INFINITY });
    }
    Ok(BranchPoint {
        eps,
        eta: prob.eta(),
        d2: prob.ctx().d2(),
        phi,
        s_eps: s,
        mu_eps: mu,
        residual_norm,
        iterations,
        sigma: None,
        u,
        w,
    })
}

const MAX_BISECTIONS: usize = 5;

fn reach(
    from: &BranchPoint,
    target: f64,
    param: Parameter,
    template: &StationaryProblem,
    opts: &NewtonOptions,
    depth: usize,
) -> Result<BranchPoint> {
    let prob = match param {
        Parameter::Epsilon => template.with_eta(from.eta)?.with_eps(target)?,
        Parameter::Eta => template.with_eps(from.eps)?.with_eta(target)?,
    };
    match newton(&from.phi, &prob, opts) {
        Ok(pt) => Ok(pt),
        Err(_) if depth < MAX_BISECTIONS => {
            let start = match param {
                Parameter::Epsilon => from.eps,
                Parameter::Eta => from.eta,
            };
            let mid = match param {
                Parameter::Epsilon => (start * target).sqrt(),
                Parameter::Eta => 0.5 * (start + target),
            };
            let halfway = reach(from, mid, param, template, opts, depth + 1)?;
            reach(&halfway, target, param, template, opts, depth + 1)
        }
        Err(_) => Err(SktError::BranchBroken { eps: prob.eps(), eta: prob.eta() }),
    }
}

fn march(
    order: &[f64],
    seed: &FieldPair,
    template: &StationaryProblem,
    opts: &NewtonOptions,
) -> Result<Vec<BranchPoint>> {
    let first_prob = template.with_eps(order[0])?;
    let first = newton(seed, &first_prob, opts)
        .map_err(|_| SktError::BranchBroken { eps: order[0], eta: template.eta() })?;
    let mut pts = vec![first];
    for &eps in &order[1..] {
        let next = reach(pts.last().expect("nonempty"), eps, Parameter::Epsilon, template, opts, 0)?;
        pts.push(next);
    }
    Ok(pts)
}

/// Continue the shadow branch of the given sign over a strictly descending eps grid.
///
/// Seeds at the largest eps with the ansatz and marches down; if that fails,
/// seeds at the smallest eps and marches up instead.
pub fn continue_branch(
    template: &StationaryProblem,
    eps_grid: &[f64],
    sign: Sign,
    opts: &NewtonOptions,
) -> Result<Branch> {
    let p = template.params();
    let mode = template.mode();
    if eps_grid.is_empty() {
        return Err(SktError::Config("empty eps grid".into()));
    }
    let eps_max = p.a2 / mode.lambda();
    for w in eps_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(SktError::Config("eps grid must be strictly descending".into()));
        }
    }
    if let Some(bad) = eps_grid.iter().find(|&&e| !(e > 0.0 && e < eps_max)) {
        return Err(SktError::Config(format!("eps = {bad} outside (0, {eps_max})")));
    }
    let root = reduce(p, mode, sign)?;
    let ansatz = build_ansatz(&root, p, mode, template.dom())?;
    let shadow = template.with_eta(0.0)?;

    let down = march(eps_grid, &ansatz.guess(eps_grid[0]), &shadow, opts);
    let points = match down {
        Ok(pts) => pts,
        Err(first_err) => {
            let ascending: Vec<f64> = eps_grid.iter().rev().copied().collect();
            match march(&ascending, &ansatz.guess(ascending[0]), &shadow, opts) {
                Ok(mut pts) => {
                    pts.reverse();
                    pts
                }
                Err(_) => return Err(first_err),
            }
        }
    };
    Ok(Branch { sign, j: mode.j(), parameter: Parameter::Epsilon, points })
}

/// Continue a shadow point into the full system, eta = 1/alpha increasing
/// from 0. `alpha_list` must be strictly ascending; the returned points are in
/// the same (ascending alpha) order.
pub fn eta_homotopy(
    shadow_point: &BranchPoint,
    template: &StationaryProblem,
    alpha_list: &[f64],
    sign: Sign,
    opts: &NewtonOptions,
) -> Result<Branch> {
    if shadow_point.eta != 0.0 {
        return Err(SktError::Config("homotopy must start from a shadow point (eta = 0)".into()));
    }
    if alpha_list.iter().any(|a| !(a.is_finite() && *a > 0.0)) || alpha_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SktError::Config("alpha list must be positive and strictly ascending".into()));
    }
    let template = template.with_eta(0.0)?.with_eps(shadow_point.eps)?;
    let mut pts: Vec<BranchPoint> = Vec::with_capacity(alpha_list.len());
    let mut prev = shadow_point.clone();
    for &alpha in alpha_list.iter().rev() {
        let next = reach(&prev, 1.0 / alpha, Parameter::Eta, &template, opts, 0)?;
        pts.push(next.clone());
        prev = next;
    }
    pts.reverse();
    Ok(Branch { sign, j: template.mode().j(), parameter: Parameter::Eta, points: pts })
}

/// `max_x |a(x) - b(x)|`
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Options for pseudo-arclength continuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArclengthOptions {
    /// Step length in the scaled (coefficients, parameter/param_scale) space.
    pub ds: f64,
    pub steps: usize,
    /// Typical size of the parameter, used to balance the arclength metric.
    pub param_scale: f64,
    /// +1 to start with the parameter increasing, -1 decreasing.
    pub direction: f64,
    pub newton: NewtonOptions,
}

/// One accepted arclength step.
#[derive(Debug, Clone, PartialEq)]
pub struct ArclengthPoint {
    pub point: BranchPoint,
    /// d(parameter)/ds of the tangent; a sign change brackets a fold.
    pub param_rate: f64,
}

fn param_of(pt: &BranchPoint, param: Parameter) -> f64 {
    match param {
        Parameter::Epsilon => pt.eps,
        Parameter::Eta => pt.eta,
    }
}

fn problem_at(template: &StationaryProblem, param: Parameter, value: f64) -> Result<StationaryProblem> {
    match param {
        Parameter::Epsilon => template.with_eps(value),
        Parameter::Eta => template.with_eta(value),
    }
}

/// d(residual)/d(parameter) at fixed coefficients.
fn param_derivative(x: &FieldPair, template: &StationaryProblem, param: Parameter, value: f64) -> Result<DVector<f64>> {
    let prob = problem_at(template, param, value)?;
    match param {
        Parameter::Eta => {
            // residual is affine in eta: d/d eta = -R
            let with = residual_vector(x, &prob.with_eta(1.0)?)?;
            let without = residual_vector(x, &prob.with_eta(0.0)?)?;
            Ok(with - without)
        }
        Parameter::Epsilon => {
            let h = 1e-7 * value.abs().max(1e-6);
            let hi = residual_vector(x, &problem_at(template, param, value + h)?)?;
            let lo_val = if value - h > 0.0 { value - h } else { value };
            let lo = residual_vector(x, &problem_at(template, param, lo_val)?)?;
            Ok((hi - lo) / (value + h - lo_val))
        }
    }
}

fn unit_tangent(jac: &DMatrix<f64>, rp: &DVector<f64>, scale: f64, orient: Option<&DVector<f64>>, direction: f64) -> Result<DVector<f64>> {
    let n2 = jac.nrows();
    let v = jac.clone().lu().solve(&(-rp * scale)).ok_or(SktError::Singular("arclength tangent"))?;
    let mut tau = DVector::zeros(n2 + 1);
    tau.rows_mut(0, n2).copy_from(&v);
    tau[n2] = 1.0;
    tau /= tau.norm();
    let flip = match orient {
        Some(prev) => tau.dot(prev) < 0.0,
        None => tau[n2] * direction < 0.0,
    };
    if flip {
        tau = -tau;
    }
    Ok(tau)
}

/// Pseudo-arclength continuation in eps or eta from a converged point; able to
/// pass folds where natural continuation stalls.
pub fn arclength_continue(
    start: &BranchPoint,
    template: &StationaryProblem,
    param: Parameter,
    opts: &ArclengthOptions,
) -> Result<Vec<ArclengthPoint>> {
    let dom = template.dom_arc();
    let n2 = 2 * dom.n();
    let scale = opts.param_scale;
    let mut x = start.phi.clone();
    let mut pval = param_of(start, param);
    let base = match param {
        Parameter::Epsilon => template.with_eta(start.eta)?,
        Parameter::Eta => template.with_eps(start.eps)?,
    };
    let mut prev_tau: Option<DVector<f64>> = None;
    let mut out = Vec::with_capacity(opts.steps);
    let mut ds = opts.ds;
    for _ in 0..opts.steps {
        let prob = problem_at(&base, param, pval)?;
        let jac = jacobian(&x, &prob)?;
        let rp = param_derivative(&x, &base, param, pval)?;
        let tau = unit_tangent(&jac, &rp, scale, prev_tau.as_ref(), opts.direction)?;
        let mut accepted = None;
        for _ in 0..=MAX_BISECTIONS {
            if let Ok(res) = arclength_correct(&x, pval, &tau, ds, &base, param, opts, &dom) {
                accepted = Some(res);
                break;
            }
            ds *= 0.5;
        }
        let Some((xn, pn, norm, iters)) = accepted else {
            return Err(SktError::BranchBroken { eps: prob.eps(), eta: prob.eta() });
        };
        x = xn;
        pval = pn;
        let prob = problem_at(&base, param, pval)?;
        let pt = make_point(x.clone(), &prob, iters, norm)?;
        out.push(ArclengthPoint { point: pt, param_rate: tau[n2] * scale });
        prev_tau = Some(tau);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn arclength_correct(
    x0: &FieldPair,
    p0: f64,
    tau: &DVector<f64>,
    ds: f64,
    base: &StationaryProblem,
    param: Parameter,
    opts: &ArclengthOptions,
    dom: &Domain1D,
) -> Result<(FieldPair, f64, f64, usize)> {
    let n2 = 2 * dom.n();
    let scale = opts.param_scale;
    let mut z = DVector::zeros(n2 + 1);
    z.rows_mut(0, n2).copy_from(&x0.stacked());
    z[n2] = p0 / scale;
    let z_pred = &z + tau * ds;
    let mut z = z_pred.clone();
    for it in 1..=opts.newton.max_iter {
        let pval = z[n2] * scale;
        let prob = problem_at(base, param, pval)?;
        let x = FieldPair::from_stacked(dom, &z.rows(0, n2).into_owned(), FieldRole::State);
        let r = residual_vector(&x, &prob)?;
        let constraint = tau.dot(&(&z - &z_pred));
        let norm = sup(&r);
        if norm <= opts.newton.tol * x.sup_norm().max(1.0) && constraint.abs() <= 1e-12 {
            return Ok((x, pval, norm, it));
        }
        let jac = jacobian(&x, &prob)?;
        let rp = param_derivative(&x, base, param, pval)? * scale;
        let mut big = DMatrix::zeros(n2 + 1, n2 + 1);
        big.view_mut((0, 0), (n2, n2)).copy_from(&jac);
        big.view_mut((0, n2), (n2, 1)).copy_from(&rp);
        big.view_mut((n2, 0), (1, n2 + 1)).copy_from(&tau.transpose());
        let mut rhs = DVector::zeros(n2 + 1);
        rhs.rows_mut(0, n2).copy_from(&(-&r));
        rhs[n2] = -constraint;
        let dz = big.lu().solve(&rhs).ok_or(SktError::Singular("arclength corrector"))?;
        z += dz;
    }
    Err(SktError::NoConvergence { iterations: opts.newton.max_iter, final_norm: f64::NAN })
}
