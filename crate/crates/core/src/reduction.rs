//! Limiting (eps = 0) reduction: the mode-amplitude equation `h_j(mu) = A/B`,
//! the amplitude `s0`, the two scalar bifurcation equations, the
//! non-degeneracy determinant and the leading-order ansatz with its first
//! correction.

use serde::{Deserialize, Serialize};

use crate::basis::{project_p, solve_l_x0, Domain1D, EigenMode, FieldPair, FieldRole};
use crate::error::{Result, SktError};
use crate::model::Params;

/// Which of the two reduced roots (`mu < 0` or `mu > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

const QUAD_START: usize = 256;
const QUAD_MAX: usize = 1 << 22;
const QUAD_TOL: f64 = 1e-14;
const QUAD_ACCEPT: f64 = 1e-9;

/// `int l^-k` and `int phi_j l^-k` for `k = 1, 2, 3`, with `l = 1 + mu phi_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeIntegrals {
    pub inv: [f64; 3],
    pub weighted: [f64; 3],
    /// Number of midpoint cells of the accepted estimate.
    pub cells: usize,
}

fn integrals_at(mu: f64, mode: &EigenMode, n: usize) -> ([f64; 3], [f64; 3]) {
    let h = mode.length() / n as f64;
    let mut inv = [0.0; 3];
    let mut wt = [0.0; 3];
    for k in 0..n {
        let ph = mode.value_at((k as f64 + 0.5) * h);
        let r = 1.0 / (1.0 + mu * ph);
        let r2 = r * r;
        let r3 = r2 * r;
        inv[0] += r;
        inv[1] += r2;
        inv[2] += r3;
        wt[0] += ph * r;
        wt[1] += ph * r2;
        wt[2] += ph * r3;
    }
    for v in inv.iter_mut().chain(wt.iter_mut()) {
        *v *= h;
    }
    (inv, wt)
}

/// Mode integrals by midpoint quadrature, doubling the cell count until two
/// successive estimates agree.
pub fn mode_integrals(mu: f64, mode: &EigenMode) -> Result<ModeIntegrals> {
    if !mode.contains(mu) {
        return Err(SktError::OutOfBracket { mu, lo: mode.m_lower(), hi: mode.m_upper() });
    }
    let mut n = QUAD_START;
    let mut prev = integrals_at(mu, mode, n);
    loop {
        n *= 2;
        let cur = integrals_at(mu, mode, n);
        let mut worst: f64 = 0.0;
        for k in 0..3 {
            let scale = cur.0[k].abs();
            worst = worst.max((cur.0[k] - prev.0[k]).abs() / scale);
            worst = worst.max((cur.1[k] - prev.1[k]).abs() / (scale + cur.1[k].abs()));
        }
        if worst <= QUAD_TOL || (n >= QUAD_MAX && worst <= QUAD_ACCEPT) {
            return Ok(ModeIntegrals { inv: cur.0, weighted: cur.1, cells: n });
        }
        if n >= QUAD_MAX {
            return Err(SktError::QuadratureBreakdown { mu });
        }
        prev = cur;
    }
}

/// `h_j(mu) = int l^-2 / int l^-1`.
pub fn hj(mu: f64, mode: &EigenMode) -> Result<f64> {
    let q = mode_integrals(mu, mode)?;
    Ok(q.inv[1] / q.inv[0])
}

/// `h_j'(mu)` by differentiation under the integral sign.
pub fn hj_derivative(mu: f64, mode: &EigenMode) -> Result<f64> {
    let q = mode_integrals(mu, mode)?;
    let (i1, i2) = (q.inv[0], q.inv[1]);
    let (p2, p3) = (q.weighted[1], q.weighted[2]);
    Ok((i2 * p2 - 2.0 * p3 * i1) / (i1 * i1))
}

/// Both roots `m_j < mu- < 0 < mu+ < M_j` of `h_j(mu) = A/B`.
pub fn solve_mu(p: &Params, mode: &EigenMode) -> Result<(f64, f64)> {
    let target = p.ratio_a() / p.ratio_b();
    if !(target > 1.0) {
        return Err(SktError::RatioNotAboveOne { ratio: target });
    }
    let width = mode.m_upper() - mode.m_lower();
    let edge = 1e-6 * width;
    let minus = root_between(mode, target, -1e-8, mode.m_lower() + edge, "negative")?;
    let plus = root_between(mode, target, 1e-8, mode.m_upper() - edge, "positive")?;
    Ok((minus, plus))
}

/// Root of `h_j = target` between `inner` (near 0, where h_j ~ 1) and `outer`.
fn root_between(mode: &EigenMode, target: f64, inner: f64, outer: f64, side: &'static str) -> Result<f64> {
    let f = |mu: f64| hj(mu, mode).map(|h| h - target);
    if f(outer)? <= 0.0 {
        return Err(SktError::BracketFailure { side });
    }
    if f(inner)? >= 0.0 {
        return Err(SktError::BracketFailure { side });
    }
    let (mut a, mut b) = (inner, outer);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if f(mid)? > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
        if (b - a).abs() <= 1e-15 * b.abs().max(1.0) {
            break;
        }
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut mu = 0.5 * (a + b);
    for _ in 0..4 {
        let r = f(mu)?;
        if r == 0.0 {
            break;
        }
        let next = mu - r / hj_derivative(mu, mode)?;
        if !(next > lo - (hi - lo) && next < hi + (hi - lo)) || !mode.contains(next) {
            break;
        }
        if f(next)?.abs() >= r.abs() {
            break;
        }
        mu = next;
    }
    Ok(mu)
}

/// Leading amplitude `s0` at a root `mu0` (two-term closed form).
pub fn s_leading(p: &Params, mode: &EigenMode, mu0: f64) -> Result<f64> {
    if mu0 == 0.0 {
        return Err(SktError::InvalidParams("mu0 must be nonzero".into()));
    }
    let q = mode_integrals(mu0, mode)?;
    let vol = mode.volume();
    let lam = mode.lambda();
    let ba = p.ratio_b() / p.ratio_a();
    let common = p.a2 * p.a2 * (p.a2 * p.beta + p.b2) / (p.b2 * p.b2 * mu0 * mu0);
    let first = p.a1 * common / (p.d1 * lam * lam) * (vol - ba * q.inv[0]);
    let second = common / lam * (q.inv[0] - vol);
    let s = first + second;
    if !(s > 0.0) {
        return Err(SktError::NonPositiveAmplitude(s));
    }
    Ok(s)
}

/// The two scalar bifurcation equations `(g1(mu), g2(s, mu))`.
pub fn g_scalar(s: f64, mu: f64, p: &Params, mode: &EigenMode) -> Result<(f64, f64)> {
    let q = mode_integrals(mu, mode)?;
    Ok(g_from_integrals(s, mu, p, mode, &q))
}

fn g_from_integrals(s: f64, mu: f64, p: &Params, mode: &EigenMode, q: &ModeIntegrals) -> (f64, f64) {
    let vol = mode.volume();
    let lam = mode.lambda();
    let ba = p.ratio_b() / p.ratio_a();
    let g1 = p.a1 * p.a2 / (p.b2 * p.d1 * vol) * (q.inv[0] - ba * q.inv[1]);
    let g2 = s * mu * lam * lam * p.b2 / (p.a2 * p.a2)
        - p.kernel_slope() * p.a2 / (p.b2 * p.d1) * (p.a1 * q.weighted[0] - p.a2 * p.b1 / p.b2 * q.weighted[1])
        + lam * (p.a2 * p.beta + p.b2) / p.b2 * q.weighted[0];
    (g1, g2)
}

/// Pass/fail with the signed slack of one of the three integral inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margin {
    pub holds: bool,
    pub margin: f64,
}

impl Margin {
    fn of(slack: f64) -> Self {
        Margin { holds: slack > 0.0, margin: slack }
    }
}

/// `int l^-1 > |Omega|`, `int l^-1 <= (A/B)|Omega|`, `(A/B) int l^-2 <= int l^-3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequalities {
    pub i: Margin,
    pub ii: Margin,
    pub iii: Margin,
}

impl Inequalities {
    pub fn all_hold(&self) -> bool {
        self.i.holds && self.ii.holds && self.iii.holds
    }
}

/// Limiting reduction data for one sign; serializes to the reduction report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedRoot {
    pub j: usize,
    pub sign: Sign,
    pub mu0: f64,
    pub s0: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
    pub det_value: f64,
    pub lower_bound: f64,
    pub c0: f64,
    pub inequalities: Inequalities,
}

/// `(det, lower_bound)` with `det = -(g1)_mu (g2)_s` at the root.
pub fn nondegeneracy(root: &ReducedRoot, p: &Params, mode: &EigenMode) -> Result<(f64, f64)> {
    let q = mode_integrals(root.mu0, mode)?;
    nondegeneracy_from(root.mu0, p, mode, &q)
}

fn nondegeneracy_from(mu0: f64, p: &Params, mode: &EigenMode, q: &ModeIntegrals) -> Result<(f64, f64)> {
    let vol = mode.volume();
    let lam = mode.lambda();
    let a = p.ratio_a();
    let ba = p.ratio_b() / a;
    let det = a * mu0 * lam * lam / (p.d1 * vol) * (q.weighted[1] - 2.0 * ba * q.weighted[2]);
    let lower = a * lam * lam * (1.0 - ba) * q.inv[1] / (p.d1 * vol);
    if !(det > 0.0) || det < lower * (1.0 - 1e-8) {
        return Err(SktError::DegenerateRoot(det));
    }
    Ok((det, lower))
}

/// `int [(B/A + 1) l^-2 - (2B/A) l^-3]`, the bracket whose sign fixes C0.
pub fn c0_bracket(p: &Params, q: &ModeIntegrals) -> f64 {
    let ba = p.ratio_b() / p.ratio_a();
    (ba + 1.0) * q.inv[1] - 2.0 * ba * q.inv[2]
}

/// `C0 = a2^2 a1 / (d1 b2^2 s0 |Omega|) * bracket`.
pub fn c0_value(p: &Params, mode: &EigenMode, s0: f64, q: &ModeIntegrals) -> f64 {
    p.a2 * p.a2 * p.a1 / (p.d1 * p.b2 * p.b2 * s0 * mode.volume()) * c0_bracket(p, q)
}

/// Full limiting reduction for one sign.
pub fn reduce(p: &Params, mode: &EigenMode, sign: Sign) -> Result<ReducedRoot> {
    p.validate()?;
    let (minus, plus) = solve_mu(p, mode)?;
    let mu0 = match sign {
        Sign::Plus => plus,
        Sign::Minus => minus,
    };
    let q = mode_integrals(mu0, mode)?;
    let s0 = s_leading(p, mode, mu0)?;
    let (det_value, lower_bound) = nondegeneracy_from(mu0, p, mode, &q)?;
    let vol = mode.volume();
    let ab = p.ratio_a() / p.ratio_b();
    let inequalities = Inequalities {
        i: Margin::of(q.inv[0] - vol),
        ii: Margin::of(ab * vol - q.inv[0]),
        iii: Margin::of(q.inv[2] - ab * q.inv[1]),
    };
    Ok(ReducedRoot {
        j: mode.j(),
        sign,
        mu0,
        s0,
        i1: q.inv[0],
        i2: q.inv[1],
        i3: q.inv[2],
        det_value,
        lower_bound,
        c0: c0_value(p, mode, s0, &q),
        inequalities,
    })
}

/// Leading-order profile `Phi0`, its first correction `Phi*0`, and the limiting
/// physical profiles `u0 = a2/(b2 l0)`, `eps w -> (b2/a2) s0 l0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    pub phi0: FieldPair,
    pub phi_star0: FieldPair,
    pub u0: Vec<f64>,
    pub w0_scaled: Vec<f64>,
}

impl Ansatz {
    /// `Phi0 + eps Phi*0`
    pub fn guess(&self, eps: f64) -> FieldPair {
        self.phi0.axpy(eps, &self.phi_star0)
    }
}

/// `l0(x) = 1 + mu0 phi_j(x)` on the grid.
pub fn leading_profile(mu0: f64, mode: &EigenMode) -> Vec<f64> {
    mode.phi().iter().map(|ph| 1.0 + mu0 * ph).collect()
}

/// The mu-parameterized limiting reaction terms `(f1_0(mu), f2_0(s, mu))` on the grid.
pub fn limit_reaction(s: f64, mu: f64, p: &Params, mode: &EigenMode) -> (Vec<f64>, Vec<f64>) {
    let lam = mode.lambda();
    let f1 = mode
        .phi()
        .iter()
        .map(|ph| {
            let l = 1.0 + mu * ph;
            p.a2 / (p.d1 * p.b2 * l) * (p.a1 - p.b1 * p.a2 / (p.b2 * l))
        })
        .collect();
    let f2 = mode
        .phi()
        .iter()
        .map(|ph| {
            let l = 1.0 + mu * ph;
            s * lam * lam * p.b2 / (p.a2 * p.a2) * mu * ph + lam * (p.a2 * p.beta + p.b2) / (p.b2 * l)
        })
        .collect();
    (f1, f2)
}

pub fn build_ansatz(root: &ReducedRoot, p: &Params, mode: &EigenMode, dom: &Domain1D) -> Result<Ansatz> {
    let l0 = leading_profile(root.mu0, mode);
    if let Some(node) = l0.iter().position(|&l| !(l > 0.0)) {
        return Err(SktError::PositivityLoss { node });
    }
    let s0 = root.s0;
    let ba = p.b2 / p.a2;
    let phi0 = FieldPair::from_nodal(
        dom,
        vec![s0; dom.n()],
        l0.iter().map(|l| s0 * (p.beta + ba * l)).collect(),
        FieldRole::State,
    );
    let (f1, f2) = limit_reaction(s0, root.mu0, p, mode);
    let forcing = FieldPair::from_nodal(dom, f1, f2, FieldRole::Residual);
    let range_part = project_p(&forcing, mode, p).remainder;
    let phi_star0 = solve_l_x0(&range_part, mode, p, dom)?.scaled(-1.0);
    let u0 = l0.iter().map(|l| p.a2 / (p.b2 * l)).collect();
    let w0_scaled = l0.iter().map(|l| ba * s0 * l).collect();
    Ok(Ansatz { phi0, phi_star0, u0, w0_scaled })
}
