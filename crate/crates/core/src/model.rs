//! Scalar parameters and the pointwise kinematics of the transformed variables
//! `phi = (eps + w~) u`, `psi = (1 + beta u) w~`.
//!
//! Every eps-sensitive expression is evaluated in a cancellation-free form so
//! that the same code path is accurate from eps = 1 down to eps = 0.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SktError};

/// Rate constants of the two-species competition system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    /// Diffusion rate of u.
    pub d1: f64,
    /// Cross-diffusion coefficient in the second species' flux.
    #[serde(default)]
    pub beta: f64,
}

impl Params {
    #[allow(clippy::too_many_arguments)]
    pub fn new(a1: f64, a2: f64, b1: f64, b2: f64, c1: f64, c2: f64, d1: f64, beta: f64) -> Result<Self> {
        let p = Params { a1, a2, b1, b2, c1, c2, d1, beta };
        p.validate()?;
        Ok(p)
    }

    /// The reference set used throughout the tests and the bundled config.
    pub fn worked() -> Self {
        Params { a1: 4.0, a2: 2.0, b1: 1.0, b2: 1.0, c1: 1.0, c2: 1.0, d1: 1.0, beta: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("d1", self.d1),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(SktError::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(SktError::InvalidParams(format!("beta = {} must be nonnegative", self.beta)));
        }
        Ok(())
    }

    /// A = a1/a2
    pub fn ratio_a(&self) -> f64 {
        self.a1 / self.a2
    }

    /// B = b1/b2
    pub fn ratio_b(&self) -> f64 {
        self.b1 / self.b2
    }

    /// C = c1/c2
    pub fn ratio_c(&self) -> f64 {
        self.c1 / self.c2
    }

    /// beta + b2/a2, the psi-slope of the constant kernel direction.
    pub fn kernel_slope(&self) -> f64 {
        self.beta + self.b2 / self.a2
    }

    /// Whether A > B, the hypothesis under which reduced roots exist.
    pub fn admits_reduction(&self) -> bool {
        self.ratio_a() > self.ratio_b()
    }
}

/// Distance `eps = a2/lambda_j - d2` to the blow-up point, with the derived d2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonContext {
    j: usize,
    lambda_j: f64,
    eps: f64,
    d2: f64,
    inv_d2: f64,
}

impl EpsilonContext {
    pub fn new(j: usize, lambda_j: f64, eps: f64, p: &Params) -> Result<Self> {
        if j == 0 {
            return Err(SktError::ContextInvalid("mode index must be at least 1".into()));
        }
        if !(lambda_j.is_finite() && lambda_j > 0.0) {
            return Err(SktError::ContextInvalid(format!("lambda_j = {lambda_j} must be positive")));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(SktError::ContextInvalid(format!("eps = {eps} must be nonnegative")));
        }
        let gap = p.a2 - eps * lambda_j;
        if !(gap > 0.0) {
            return Err(SktError::ContextInvalid(format!(
                "eps = {eps} leaves d2 <= 0 (needs eps < {})",
                p.a2 / lambda_j
            )));
        }
        Ok(EpsilonContext { j, lambda_j, eps, d2: gap / lambda_j, inv_d2: lambda_j / gap })
    }

    /// Context from a physical d2 instead of eps.
    pub fn from_d2(j: usize, lambda_j: f64, d2: f64, p: &Params) -> Result<Self> {
        Self::new(j, lambda_j, p.a2 / lambda_j - d2, p)
    }

    pub fn with_eps(&self, eps: f64, p: &Params) -> Result<Self> {
        Self::new(self.j, self.lambda_j, eps, p)
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn lambda_j(&self) -> f64 {
        self.lambda_j
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    /// 1/d2 = lambda_j / (a2 - eps lambda_j), exact in eps.
    pub fn inv_d2(&self) -> f64 {
        self.inv_d2
    }
}

/// Shared intermediate quantities of the inverse change of variables at one point.
///
/// With `D = psi - beta phi` and `S = sqrt((D + eps)^2 + 4 eps beta phi)` the
/// two denominators are `E = D + eps + S` and `G = D - eps + S`, so that
/// `u = 2 phi / E` and `w~ = G / 2`. Both are formed without subtractive
/// cancellation.
#[derive(Debug, Clone, Copy)]
struct Kinematics {
    phi: f64,
    psi: f64,
    eps: f64,
    beta: f64,
    d: f64,
    s: f64,
    e: f64,
    g: f64,
}

impl Kinematics {
    fn new(phi: f64, psi: f64, eps: f64, beta: f64) -> Result<Self> {
        let bad = SktError::NonPositiveDenominator { phi, psi };
        if !(phi >= 0.0 && psi.is_finite() && phi.is_finite()) {
            return Err(bad);
        }
        let d = psi - beta * phi;
        if eps == 0.0 {
            if !(d > 0.0) {
                return Err(bad);
            }
            return Ok(Kinematics { phi, psi, eps, beta, d, s: d, e: 2.0 * d, g: 2.0 * d });
        }
        let q = d + eps;
        let cross = 4.0 * eps * beta * phi;
        let s = (q * q + cross).sqrt();
        let e = if q >= 0.0 { q + s } else { cross / (s - q) };
        if !(e > 0.0 && e.is_finite()) {
            return Err(bad);
        }
        let r = d - eps;
        let g = if r >= 0.0 { r + s } else { 4.0 * eps * psi / (s - r) };
        Ok(Kinematics { phi, psi, eps, beta, d, s, e, g })
    }

    fn u(&self) -> f64 {
        2.0 * self.phi / self.e
    }

    fn wt(&self) -> f64 {
        0.5 * self.g
    }

    fn require_cone(&self) -> Result<()> {
        if self.d > 0.0 {
            Ok(())
        } else {
            Err(SktError::NonPositiveDenominator { phi: self.phi, psi: self.psi })
        }
    }

    /// (rho1, rho2) = ((h1e - h10)/eps, (h2e - h20)/eps) in closed form.
    fn increments(&self) -> (f64, f64) {
        let rho1 = -4.0 * self.phi * self.psi / (self.d * self.e * self.g);
        let rho2 = 2.0 * self.beta * self.phi / self.e;
        (rho1, rho2)
    }

    /// Partial derivatives of S, E, G with respect to (phi, psi).
    fn partials(&self) -> Partials {
        let q = self.d + self.eps;
        let s_phi = self.beta * (self.eps - self.d) / self.s;
        let s_psi = q / self.s;
        let e_phi = -self.beta * self.g / self.s;
        let e_psi = self.e / self.s;
        Partials { s_phi, s_psi, e_phi, e_psi, g_phi: e_phi, g_psi: e_psi }
    }

    fn dh(&self) -> Matrix2<f64> {
        let pr = self.partials();
        let u = self.u();
        let u_phi = 2.0 / self.e + u * self.beta * self.g / (self.s * self.e);
        let u_psi = -u / self.s;
        let w_phi = 0.5 * pr.g_phi;
        let w_psi = 0.5 * pr.g_psi;
        Matrix2::new(u_phi, u_psi, w_phi, w_psi)
    }
}

#[derive(Debug, Clone, Copy)]
#[allow(dead_code)]
struct Partials {
    s_phi: f64,
    s_psi: f64,
    e_phi: f64,
    e_psi: f64,
    g_phi: f64,
    g_psi: f64,
}

/// Inverse change of variables: `(u, w~) = (h1e(phi, psi), h2e(phi, psi))`.
pub fn h_eps(phi: f64, psi: f64, ctx: &EpsilonContext, p: &Params) -> Result<(f64, f64)> {
    let k = Kinematics::new(phi, psi, ctx.eps(), p.beta)?;
    Ok((k.u(), k.wt()))
}

/// Exact finite-eps increments `rho1 = (h1e - h10)/eps`, `rho2 = (h2e - h20)/eps`.
pub fn stable_increments(phi: f64, psi: f64, eps: f64, beta: f64) -> Result<(f64, f64)> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(SktError::ContextInvalid(format!("eps = {eps} must be nonnegative")));
    }
    let k = Kinematics::new(phi, psi, eps, beta)?;
    k.require_cone()?;
    Ok(k.increments())
}

/// Reaction terms `(f1, f2)` of the transformed stationary system.
///
/// `f2` uses the compensated expansion, so eps = 0 yields the limiting
/// nonlinearity with no 1/eps cancellation anywhere in between.
pub fn nonlinearity(phi: f64, psi: f64, ctx: &EpsilonContext, p: &Params) -> Result<(f64, f64)> {
    let loc = Local::new(phi, psi, ctx, p)?;
    Ok(loc.f())
}

/// Competition remainders `(r1, r2)` multiplying eta = 1/alpha.
pub fn perturbation_terms(phi: f64, psi: f64, ctx: &EpsilonContext, p: &Params) -> Result<(f64, f64)> {
    if ctx.eps() == 0.0 {
        return Err(SktError::EpsilonZero);
    }
    let loc = Local::new(phi, psi, ctx, p)?;
    Ok(loc.r())
}

/// Jacobian of `(h1e, h2e)` with respect to `(phi, psi)`, rows = components.
pub fn d_h_eps(phi: f64, psi: f64, ctx: &EpsilonContext, p: &Params) -> Result<Matrix2<f64>> {
    let k = Kinematics::new(phi, psi, ctx.eps(), p.beta)?;
    Ok(k.dh())
}

/// Jacobian of `(f1, f2)` with respect to `(phi, psi)`, differentiated in the
/// compensated form.
pub fn d_nonlinearity(phi: f64, psi: f64, ctx: &EpsilonContext, p: &Params) -> Result<Matrix2<f64>> {
    let loc = Local::new(phi, psi, ctx, p)?;
    Ok(loc.df())
}

/// Jacobian of `(r1, r2)` with respect to `(phi, psi)`.
pub fn d_perturbation_terms(phi: f64, psi: f64, ctx: &EpsilonContext, p: &Params) -> Result<Matrix2<f64>> {
    if ctx.eps() == 0.0 {
        return Err(SktError::EpsilonZero);
    }
    let loc = Local::new(phi, psi, ctx, p)?;
    Ok(loc.dr())
}

/// All pointwise quantities at one admissible state, sharing one kinematics
/// evaluation. Used by the field-level assembly routines.
#[derive(Debug, Clone, Copy)]
pub struct Local {
    k: Kinematics,
    p: Params,
    lambda: f64,
    inv_d2: f64,
}

impl Local {
    /// Requires the positive cone `phi >= 0`, `psi - beta phi > 0`.
    pub fn new(phi: f64, psi: f64, ctx: &EpsilonContext, p: &Params) -> Result<Self> {
        let k = Kinematics::new(phi, psi, ctx.eps(), p.beta)?;
        k.require_cone()?;
        Ok(Local { k, p: *p, lambda: ctx.lambda_j(), inv_d2: ctx.inv_d2() })
    }

    pub fn u(&self) -> f64 {
        self.k.u()
    }

    pub fn w_tilde(&self) -> f64 {
        self.k.wt()
    }

    pub fn dh(&self) -> Matrix2<f64> {
        self.k.dh()
    }

    fn prefactor(&self) -> f64 {
        let p = &self.p;
        self.lambda / (p.a2 * (p.a2 - self.k.eps * self.lambda))
    }

    pub fn f(&self) -> (f64, f64) {
        let p = &self.p;
        let u = self.k.u();
        let f1 = u * (p.a1 - p.b1 * u) / p.d1;
        let h10 = self.k.phi / self.k.d;
        let h20 = self.k.d;
        let (rho1, rho2) = self.k.increments();
        let a2m = p.a2 - p.b2 * h10;
        let q1 = rho2 * a2m - p.b2 * h20 * rho1;
        let q0 = h20 * a2m;
        let f2 = self.prefactor() * (p.a2 * q1 + self.lambda * q0 - self.k.eps * p.a2 * p.b2 * rho1 * rho2);
        (f1, f2)
    }

    pub fn df(&self) -> Matrix2<f64> {
        let p = &self.p;
        let k = &self.k;
        let dh = k.dh();
        let u = k.u();
        let f1_coef = (p.a1 - 2.0 * p.b1 * u) / p.d1;
        let f1_phi = f1_coef * dh[(0, 0)];
        let f1_psi = f1_coef * dh[(0, 1)];

        let pr = k.partials();
        let (rho1, rho2) = k.increments();
        let d = k.d;
        let h10 = k.phi / d;
        let h20 = d;
        let a2m = p.a2 - p.b2 * h10;
        let pi = d * k.e * k.g;

        // (d/dphi, d/dpsi) of each building block
        let d_d = [-p.beta, 1.0];
        let d_phipsi = [k.psi, k.phi];
        let d_e = [pr.e_phi, pr.e_psi];
        let d_g = [pr.g_phi, pr.g_psi];
        let d_h10 = [k.psi / (d * d), -k.phi / (d * d)];
        let d_h20 = d_d;

        let mut out = [0.0; 2];
        for i in 0..2 {
            let d_rho1 = -4.0 * d_phipsi[i] / pi - rho1 * (d_d[i] / d + d_e[i] / k.e + d_g[i] / k.g);
            let d_rho2 = if i == 0 { 2.0 * p.beta / k.e } else { 0.0 } - rho2 * d_e[i] / k.e;
            let d_a2m = -p.b2 * d_h10[i];
            let d_q1 = d_rho2 * a2m + rho2 * d_a2m - p.b2 * (d_h20[i] * rho1 + h20 * d_rho1);
            let d_q0 = d_h20[i] * a2m + h20 * d_a2m;
            out[i] = self.prefactor()
                * (p.a2 * d_q1 + self.lambda * d_q0 - k.eps * p.a2 * p.b2 * (d_rho1 * rho2 + rho1 * d_rho2));
        }
        Matrix2::new(f1_phi, f1_psi, out[0], out[1])
    }

    /// `(r1, r2)`; only meaningful for eps > 0.
    pub fn r(&self) -> (f64, f64) {
        let p = &self.p;
        let u = self.k.u();
        let wt = self.k.wt();
        let r1 = p.c1 * u * wt / p.d1;
        let r2 = p.c2 * wt * wt * self.inv_d2 / self.k.eps;
        (r1, r2)
    }

    pub fn dr(&self) -> Matrix2<f64> {
        let p = &self.p;
        let dh = self.k.dh();
        let u = self.k.u();
        let wt = self.k.wt();
        let c = 2.0 * p.c2 * wt * self.inv_d2 / self.k.eps;
        Matrix2::new(
            p.c1 * (dh[(0, 0)] * wt + u * dh[(1, 0)]) / p.d1,
            p.c1 * (dh[(0, 1)] * wt + u * dh[(1, 1)]) / p.d1,
            c * dh[(1, 0)],
            c * dh[(1, 1)],
        )
    }
}

/// Limiting nonlinearity written out term by term:
/// `f2_0 = (l^2/a2)(psi - beta phi) - (l^2 b2/a2^2) phi + (beta + b2/a2) l phi/(psi - beta phi)`.
pub fn limit_f2(phi: f64, psi: f64, lambda_j: f64, p: &Params) -> f64 {
    let d = psi - p.beta * phi;
    lambda_j * lambda_j / p.a2 * d - lambda_j * lambda_j * p.b2 / (p.a2 * p.a2) * phi
        + p.kernel_slope() * lambda_j * phi / d
}
