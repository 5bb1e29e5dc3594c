//! Time integration of the shadow system and of the full system with
//! `eta = 1/alpha`, in the original `(u, w)` variables:
//!
//! `u_t = d1 Lap[(1+w) u] + u (a1 - b1 u - eta c1 w)`
//! `w_t = d2 Lap[(1+beta u) w] + w (a2 - b2 u - eta c2 w)`
//!
//! and measurement of the growth rate of small perturbations of a steady state.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::{Domain1D, FieldPair};
use crate::error::{Result, SktError};
use crate::model::{Local, Params};
use crate::solver::{BranchPoint, StationaryProblem};

/// Residual bound for the linear solves inside a step.
pub const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Diffusion implicit with cross-coefficients frozen at the old level,
    /// reactions explicit.
    FrozenCoefficient,
    /// Linearly implicit Euler with the full Jacobian frozen at a reference state.
    LinearlyImplicit,
}

/// Nodal `(u, w)` with time bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub scheme: Scheme,
}

impl EvolutionState {
    pub fn new(u: Vec<f64>, w: Vec<f64>, dt: f64) -> Result<Self> {
        if u.len() != w.len() {
            return Err(SktError::InvalidParams("u and w lengths differ".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SktError::InvalidParams(format!("dt = {dt} must be positive")));
        }
        let s = EvolutionState { u, w, t: 0.0, dt, scheme: Scheme::FrozenCoefficient };
        s.check_positive()?;
        Ok(s)
    }

    /// The steady state of a branch point in `(u, w)` variables.
    pub fn from_point(point: &BranchPoint, dt: f64) -> Result<Self> {
        EvolutionState::new(point.u.clone(), point.w.clone(), dt)
    }

    fn check_positive(&self) -> Result<()> {
        let n = self.u.len();
        for (node, v) in self.u.iter().chain(&self.w).enumerate() {
            if !(*v >= 0.0) {
                return Err(SktError::PositivityLoss { node: node % n });
            }
        }
        Ok(())
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

    /// `max(|u|_inf, |w|_inf)`
    pub fn sup_norm(&self) -> f64 {
        self.u.iter().chain(&self.w).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max(|u - u'|_inf, |w - w'|_inf)`
    pub fn distance(&self, other: &EvolutionState) -> f64 {
        let du = self.u.iter().zip(&other.u).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let dw = self.w.iter().zip(&other.w).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        du.max(dw)
    }
}

/// Right-hand side of the `(u, w)` system at a given `eta = 1/alpha`.
#[derive(Debug, Clone, Copy)]
pub struct EvolutionRhs<'a> {
    pub params: &'a Params,
    pub d2: f64,
    pub eta: f64,
    pub dom: &'a Domain1D,
}

impl EvolutionRhs<'_> {
    fn reactions(&self, u: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.params;
        let ru = u.iter().zip(w).map(|(&u, &w)| u * (p.a1 - p.b1 * u - self.eta * p.c1 * w)).collect();
        let rw = u.iter().zip(w).map(|(&u, &w)| w * (p.a2 - p.b2 * u - self.eta * p.c2 * w)).collect();
        (ru, rw)
    }

    /// Full vector field `(u_t, w_t)`.
    pub fn eval(&self, u: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.params;
        let lap = self.dom.laplacian_nodal();
        let fu: DVector<f64> = u.iter().zip(w).map(|(&u, &w)| (1.0 + w) * u).collect::<Vec<_>>().into();
        let fw: DVector<f64> = u.iter().zip(w).map(|(&u, &w)| (1.0 + p.beta * u) * w).collect::<Vec<_>>().into();
        let lu = lap * fu * p.d1;
        let lw = lap * fw * self.d2;
        let (ru, rw) = self.reactions(u, w);
        (
            lu.iter().zip(&ru).map(|(a, b)| a + b).collect(),
            lw.iter().zip(&rw).map(|(a, b)| a + b).collect(),
        )
    }

    /// Dense Jacobian of `eval` in nodal variables, ordered `[u; w]`.
    pub fn jacobian(&self, u: &[f64], w: &[f64]) -> DMatrix<f64> {
        let p = self.params;
        let n = u.len();
        let lap = self.dom.laplacian_nodal();
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        let scaled = |coef: &dyn Fn(usize) -> f64, factor: f64| {
            let mut m = lap.clone();
            for k in 0..n {
                m.column_mut(k).scale_mut(factor * coef(k));
            }
            m
        };
        j.view_mut((0, 0), (n, n)).copy_from(&scaled(&|k| 1.0 + w[k], p.d1));
        j.view_mut((0, n), (n, n)).copy_from(&scaled(&|k| u[k], p.d1));
        j.view_mut((n, 0), (n, n)).copy_from(&scaled(&|k| p.beta * w[k], self.d2));
        j.view_mut((n, n), (n, n)).copy_from(&scaled(&|k| 1.0 + p.beta * u[k], self.d2));
        for k in 0..n {
            j[(k, k)] += p.a1 - 2.0 * p.b1 * u[k] - self.eta * p.c1 * w[k];
            j[(k, n + k)] -= self.eta * p.c1 * u[k];
            j[(n + k, k)] -= p.b2 * w[k];
            j[(n + k, n + k)] += p.a2 - p.b2 * u[k] - 2.0 * self.eta * p.c2 * w[k];
        }
        j
    }

    /// One frozen-coefficient step.
    pub fn step(&self, state: &EvolutionState) -> Result<EvolutionState> {
        let p = self.params;
        let dt = state.dt;
        let lap = self.dom.laplacian_nodal();
        let (ru, rw) = self.reactions(&state.u, &state.w);
        let solve = |coef: &dyn Fn(usize) -> f64, diff: f64, old: &[f64], react: &[f64]| -> Result<Vec<f64>> {
            let n = old.len();
            let mut m = lap.clone();
            for k in 0..n {
                m.column_mut(k).scale_mut(-dt * diff * coef(k));
            }
            for k in 0..n {
                m[(k, k)] += 1.0;
            }
            let b = DVector::from_iterator(n, old.iter().zip(react).map(|(o, r)| o + dt * r));
            let x = m.clone().lu().solve(&b).ok_or(SktError::StepRejected(f64::INFINITY))?;
            let res = (&m * &x - &b).amax() / b.amax().max(1.0);
            if !(res <= SOLVE_TOL) {
                return Err(SktError::StepRejected(res));
            }
            Ok(x.data.into())
        };
        let u = solve(&|k| 1.0 + state.w[k], p.d1, &state.u, &ru)?;
        let w = solve(&|k| 1.0 + p.beta * state.u[k], self.d2, &state.w, &rw)?;
        let next = EvolutionState { u, w, t: state.t + dt, dt, scheme: Scheme::FrozenCoefficient };
        next.check_positive()?;
        Ok(next)
    }
}

/// One step of the shadow system.
pub fn step_shadow(state: &EvolutionState, p: &Params, d2: f64, dom: &Domain1D) -> Result<EvolutionState> {
    EvolutionRhs { params: p, d2, eta: 0.0, dom }.step(state)
}

/// One step of the full system; `alpha = inf` reproduces [`step_shadow`].
pub fn step_skt(state: &EvolutionState, p: &Params, d2: f64, alpha: f64, dom: &Domain1D) -> Result<EvolutionState> {
    if !(alpha > 0.0) {
        return Err(SktError::InvalidParams(format!("alpha = {alpha} must be positive")));
    }
    EvolutionRhs { params: p, d2, eta: 1.0 / alpha, dom }.step(state)
}

/// Linearly implicit Euler with a prefactored `I - dt J`.
pub struct LinearlyImplicit<'a> {
    rhs: EvolutionRhs<'a>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    dt: f64,
}

impl<'a> LinearlyImplicit<'a> {
    /// Freeze the Jacobian at `(u_ref, w_ref)`.
    pub fn new(rhs: EvolutionRhs<'a>, u_ref: &[f64], w_ref: &[f64], dt: f64) -> Self {
        let n2 = 2 * u_ref.len();
        let m = DMatrix::identity(n2, n2) - rhs.jacobian(u_ref, w_ref) * dt;
        LinearlyImplicit { rhs, lu: m.lu(), dt }
    }

    pub fn step(&self, state: &EvolutionState) -> Result<EvolutionState> {
        let n = state.u.len();
        let (fu, fw) = self.rhs.eval(&state.u, &state.w);
        let b = DVector::from_iterator(2 * n, fu.iter().chain(&fw).map(|v| v * self.dt));
        let d = self.lu.solve(&b).ok_or(SktError::StepRejected(f64::INFINITY))?;
        if !d.iter().all(|v| v.is_finite()) {
            return Err(SktError::StepRejected(f64::INFINITY));
        }
        let next = EvolutionState {
            u: state.u.iter().zip(d.rows(0, n).iter()).map(|(a, b)| a + b).collect(),
            w: state.w.iter().zip(d.rows(n, n).iter()).map(|(a, b)| a + b).collect(),
            t: state.t + self.dt,
            dt: self.dt,
            scheme: Scheme::LinearlyImplicit,
        };
        next.check_positive()?;
        Ok(next)
    }
}

/// Map a `(phi, psi)` direction at a steady state to `(u, w)` through the
/// linearized change of variables; returns nodal `(du, dw)`.
pub fn direction_to_uw(steady: &BranchPoint, dir: &FieldPair, prob: &StationaryProblem) -> Result<(Vec<f64>, Vec<f64>)> {
    let prob = prob.with_eta(0.0)?.with_eps(steady.eps)?;
    let eps = steady.eps;
    let n = dir.len();
    let mut du = Vec::with_capacity(n);
    let mut dw = Vec::with_capacity(n);
    for node in 0..n {
        let loc = Local::new(steady.phi.first()[node], steady.phi.second()[node], prob.ctx(), prob.params())
            .map_err(|_| SktError::PositivityLoss { node })?;
        let j = loc.dh();
        let (a, b) = (dir.first()[node], dir.second()[node]);
        du.push(j[(0, 0)] * a + j[(0, 1)] * b);
        dw.push((j[(1, 0)] * a + j[(1, 1)] * b) / eps);
    }
    Ok((du, dw))
}

/// Least-squares line `y = a + b t`; returns `(b, R^2)`.
pub fn linear_fit(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let sse: f64 = t.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    (slope, if syy > 0.0 { 1.0 - sse / syy } else { 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSample {
    pub t: f64,
    pub pert_norm: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub w_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthExit {
    /// Perturbation grew by the requested factor.
    GrowthReached,
    /// Perturbation reached the amplitude cap relative to the steady state.
    AmplitudeCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthOptions {
    pub scheme: Scheme,
    /// `dt = dt_factor / sigma`
    pub dt_factor: f64,
    /// Initial amplitude relative to `|steady|_inf`.
    pub delta_rel: f64,
    pub growth_target: f64,
    /// Stop once the perturbation exceeds this fraction of `|steady|_inf`.
    pub amplitude_cap: f64,
    /// Fraction of the run discarded before fitting.
    pub fit_skip: f64,
    /// Doubling must occur before `no_growth_horizon / sigma`.
    pub no_growth_horizon: f64,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            scheme: Scheme::LinearlyImplicit,
            dt_factor: 0.01,
            delta_rel: 1e-7,
            growth_target: 1e3,
            amplitude_cap: 1e-2,
            fit_skip: 0.3,
            no_growth_horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthMeasurement {
    pub sigma_measured: f64,
    pub r_squared: f64,
    pub dt: f64,
    pub steps: usize,
    pub exit: GrowthExit,
    #[serde(skip)]
    pub series: Vec<TimeSample>,
}

/// Perturb a steady state along `dir` (in `(phi, psi)`), integrate it next to
/// an unperturbed reference trajectory and fit the exponential rate of their
/// separation. `sigma` sets the time step and the no-growth horizon.
pub fn growth_rate(
    steady: &BranchPoint,
    dir: &FieldPair,
    sigma: f64,
    prob: &StationaryProblem,
    opts: &GrowthOptions,
) -> Result<GrowthMeasurement> {
    if !(sigma > 0.0) {
        return Err(SktError::InvalidParams(format!("reference rate {sigma} must be positive")));
    }
    if !(1e-9..=1e-5).contains(&opts.delta_rel) {
        return Err(SktError::InvalidParams(format!("delta_rel = {} outside [1e-9, 1e-5]", opts.delta_rel)));
    }
    let prob = prob.with_eta(0.0)?.with_eps(steady.eps)?;
    let dt = opts.dt_factor / sigma;
    let reference = EvolutionState::from_point(steady, dt)?;
    let (du, dw) = direction_to_uw(steady, dir, &prob)?;
    let scale = du.iter().chain(&dw).fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(SktError::Singular("zero perturbation direction"));
    }
    let norm_steady = reference.sup_norm();
    let delta = opts.delta_rel * norm_steady / scale;
    let mut perturbed = EvolutionState::new(
        reference.u.iter().zip(&du).map(|(a, b)| a + delta * b).collect(),
        reference.w.iter().zip(&dw).map(|(a, b)| a + delta * b).collect(),
        dt,
    )?;
    let mut reference = reference;
    let rhs = EvolutionRhs { params: prob.params(), d2: steady.d2, eta: steady.eta, dom: prob.dom() };
    let lin = match opts.scheme {
        Scheme::LinearlyImplicit => Some(LinearlyImplicit::new(rhs, &reference.u, &reference.w, dt)),
        Scheme::FrozenCoefficient => None,
    };
    let advance = |s: &EvolutionState| match &lin {
        Some(l) => l.step(s),
        None => rhs.step(s),
    };

    let p0 = perturbed.distance(&reference);
    let horizon = opts.no_growth_horizon / sigma;
    let mut series = vec![TimeSample {
        t: 0.0,
        pert_norm: p0,
        u_min: perturbed.u_min(),
        u_max: perturbed.u_max(),
        w_max: perturbed.w_max(),
    }];
    let mut doubled = false;
    let exit = loop {
        perturbed = advance(&perturbed)?;
        reference = advance(&reference)?;
        let pn = perturbed.distance(&reference);
        series.push(TimeSample {
            t: perturbed.t,
            pert_norm: pn,
            u_min: perturbed.u_min(),
            u_max: perturbed.u_max(),
            w_max: perturbed.w_max(),
        });
        doubled |= pn >= 2.0 * p0;
        if pn >= opts.growth_target * p0 {
            break GrowthExit::GrowthReached;
        }
        if pn >= opts.amplitude_cap * norm_steady {
            break GrowthExit::AmplitudeCap;
        }
        if !doubled && perturbed.t >= horizon {
            return Err(SktError::NoGrowth { time: perturbed.t });
        }
        if perturbed.t >= 10.0 * horizon {
            return Err(SktError::NoGrowth { time: perturbed.t });
        }
    };
    let t_end = series.last().map_or(0.0, |s| s.t);
    let window: Vec<&TimeSample> = series.iter().filter(|s| s.t >= opts.fit_skip * t_end).collect();
    let ts: Vec<f64> = window.iter().map(|s| s.t).collect();
    let ys: Vec<f64> = window.iter().map(|s| s.pert_norm.ln()).collect();
    let (slope, r2) = linear_fit(&ts, &ys);
    Ok(GrowthMeasurement { sigma_measured: slope, r_squared: r2, dt, steps: series.len() - 1, exit, series })
}
