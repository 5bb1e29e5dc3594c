//! Neumann cosine basis on (0, L), the degenerate operator
//! `L = [[lap, 0], [-(beta + b2/a2) lambda_j, lap + lambda_j]]`, its kernel
//! projections, and the inverse restricted to the complement of the kernel.
//!
//! Fields are expanded as `f(x) = sum_m c_m cos(m pi x / L)` and sampled at the
//! midpoint nodes `x_k = (k + 1/2) L / n`; on that grid the cosine transform is
//! an exact bijection for modes `m < n`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, SktError};
use crate::model::Params;

/// Tolerance on the kernel projections of a right-hand side handed to
/// [`solve_l_x0`], relative to `max(1, |rhs|_inf)`.
pub const TOL_RANGE: f64 = 1e-9;

/// Uniform midpoint collocation grid with its cosine transform matrices.
#[derive(Debug)]
pub struct Domain1D {
    length: f64,
    n: usize,
    nodes: Vec<f64>,
    synth: DMatrix<f64>,
    analysis: DMatrix<f64>,
    dealias: Option<EvalGrid>,
    laplacian: OnceLock<DMatrix<f64>>,
}

/// Oversampled grid for 3/2-rule evaluation of nonlinear terms.
#[derive(Debug)]
struct EvalGrid {
    nodes: Vec<f64>,
    to_eval: DMatrix<f64>,
    from_eval: DMatrix<f64>,
}

fn midpoints(length: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| (k as f64 + 0.5) * length / n as f64).collect()
}

/// `cos(m pi x_k / L)` for rows k (nodes) and columns m < modes.
fn cosine_table(length: f64, nodes: &[f64], modes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nodes.len(), modes, |k, m| (m as f64 * PI * nodes[k] / length).cos())
}

/// Discrete analysis operator: coefficients of the first `modes` cosines from
/// samples at midpoint nodes.
fn analysis_table(length: f64, nodes: &[f64], modes: usize) -> DMatrix<f64> {
    let n = nodes.len() as f64;
    DMatrix::from_fn(modes, nodes.len(), |m, k| {
        let w = if m == 0 { 1.0 } else { 2.0 };
        w / n * (m as f64 * PI * nodes[k] / length).cos()
    })
}

impl Domain1D {
    /// `n` must be a power of two, at least 64.
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(SktError::InvalidParams(format!("domain length {length} must be positive")));
        }
        if n < 64 || !n.is_power_of_two() {
            return Err(SktError::InvalidParams(format!("n = {n} must be a power of two >= 64")));
        }
        let nodes = midpoints(length, n);
        let synth = cosine_table(length, &nodes, n);
        let analysis = analysis_table(length, &nodes, n);
        Ok(Domain1D { length, n, nodes, synth, analysis, dealias: None, laplacian: OnceLock::new() })
    }

    /// Evaluate nonlinear terms on a 3n/2-point grid and truncate back.
    pub fn with_dealiasing(mut self) -> Self {
        let m = 3 * self.n / 2;
        let nodes = midpoints(self.length, m);
        let to_eval = cosine_table(self.length, &nodes, self.n);
        let from_eval = analysis_table(self.length, &nodes, self.n);
        self.dealias = Some(EvalGrid { nodes, to_eval, from_eval });
        self
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// |Omega|
    pub fn volume(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn is_dealiased(&self) -> bool {
        self.dealias.is_some()
    }

    /// -(Laplacian eigenvalue) of cosine mode m: `(m pi / L)^2`.
    pub fn mode_eigenvalue(&self, m: usize) -> f64 {
        let k = m as f64 * PI / self.length;
        k * k
    }

    /// Nodal values -> cosine coefficients.
    pub fn forward(&self, nodal: &[f64]) -> Vec<f64> {
        (&self.analysis * DVector::from_column_slice(nodal)).data.into()
    }

    /// Cosine coefficients -> nodal values.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        (&self.synth * DVector::from_column_slice(coeffs)).data.into()
    }

    /// Synthesis matrix (nodal = S c).
    pub fn synthesis(&self) -> &DMatrix<f64> {
        &self.synth
    }

    /// Analysis matrix (c = A f).
    pub fn analysis(&self) -> &DMatrix<f64> {
        &self.analysis
    }

    /// Points at which nonlinear terms are evaluated.
    pub fn eval_nodes(&self) -> &[f64] {
        match &self.dealias {
            Some(g) => &g.nodes,
            None => &self.nodes,
        }
    }

    /// Coefficients -> values on the evaluation grid.
    pub fn to_eval_matrix(&self) -> &DMatrix<f64> {
        match &self.dealias {
            Some(g) => &g.to_eval,
            None => &self.synth,
        }
    }

    /// Values on the evaluation grid -> (truncated) coefficients.
    pub fn from_eval_matrix(&self) -> &DMatrix<f64> {
        match &self.dealias {
            Some(g) => &g.from_eval,
            None => &self.analysis,
        }
    }

    /// Integral over (0, L): zeroth coefficient times L.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n, "field length does not match the grid");
        f.iter().sum::<f64>() / self.n as f64 * self.length
    }

    /// Dense nodal Laplacian with Neumann conditions built into the basis.
    pub fn laplacian_nodal(&self) -> &DMatrix<f64> {
        self.laplacian.get_or_init(|| {
            let mut scaled = self.analysis.clone();
            for m in 0..self.n {
                let lam = self.mode_eigenvalue(m);
                scaled.row_mut(m).scale_mut(-lam);
            }
            &self.synth * scaled
        })
    }
}

/// Midpoint rule on (0, length) with n cells; spectrally accurate for smooth
/// even-periodic integrands such as functions of `cos(j pi x / L)`.
pub fn midpoint_integral(length: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = length / n as f64;
    (0..n).map(|k| f((k as f64 + 0.5) * h)).sum::<f64>() * h
}

/// A simple Neumann eigenpair `-phi'' = lambda phi`, `|phi|_2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenMode {
    j: usize,
    length: f64,
    lambda: f64,
    amplitude: f64,
    phi: Vec<f64>,
}

/// `lambda_j = (j pi / L)^2` and `phi_j = sqrt(2/L) cos(j pi x / L)` sampled on the grid.
pub fn neumann_eigenpair(dom: &Domain1D, j: usize) -> Result<EigenMode> {
    if j == 0 || j >= dom.n() / 2 {
        return Err(SktError::ContextInvalid(format!("mode index {j} must lie in 1..{}", dom.n() / 2)));
    }
    let length = dom.length();
    let amplitude = (2.0 / length).sqrt();
    let phi = dom.nodes().iter().map(|&x| amplitude * (j as f64 * PI * x / length).cos()).collect();
    Ok(EigenMode { j, length, lambda: dom.mode_eigenvalue(j), amplitude, phi })
}

impl EigenMode {
    pub fn j(&self) -> usize {
        self.j
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// |Omega|
    pub fn volume(&self) -> f64 {
        self.length
    }

    /// `sqrt(2/L)`, the cosine coefficient of phi_j.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Nodal samples on the construction grid.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.amplitude * (self.j as f64 * PI * x / self.length).cos()
    }

    pub fn max_phi(&self) -> f64 {
        self.amplitude
    }

    pub fn min_phi(&self) -> f64 {
        -self.amplitude
    }

    /// Lower end of the admissible mu-interval, `-1 / max phi_j`.
    pub fn m_lower(&self) -> f64 {
        -1.0 / self.max_phi()
    }

    /// Upper end of the admissible mu-interval, `-1 / min phi_j`.
    pub fn m_upper(&self) -> f64 {
        -1.0 / self.min_phi()
    }

    pub fn contains(&self, mu: f64) -> bool {
        mu > self.m_lower() && mu < self.m_upper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldRole {
    State,
    Residual,
    Eigenfunction,
}

/// Two scalar fields held both as nodal samples and cosine coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    role: FieldRole,
    nodal: [Vec<f64>; 2],
    coeffs: [Vec<f64>; 2],
}

impl FieldPair {
    pub fn from_nodal(dom: &Domain1D, first: Vec<f64>, second: Vec<f64>, role: FieldRole) -> Self {
        assert!(first.len() == dom.n() && second.len() == dom.n(), "field length does not match the grid");
        let coeffs = [dom.forward(&first), dom.forward(&second)];
        FieldPair { role, nodal: [first, second], coeffs }
    }

    pub fn from_coeffs(dom: &Domain1D, first: Vec<f64>, second: Vec<f64>, role: FieldRole) -> Self {
        assert!(first.len() == dom.n() && second.len() == dom.n(), "coefficient length does not match the grid");
        let nodal = [dom.inverse(&first), dom.inverse(&second)];
        FieldPair { role, nodal, coeffs: [first, second] }
    }

    /// From `[c_first; c_second]` stacked into one vector of length 2n.
    pub fn from_stacked(dom: &Domain1D, v: &DVector<f64>, role: FieldRole) -> Self {
        let n = dom.n();
        Self::from_coeffs(dom, v.rows(0, n).iter().copied().collect(), v.rows(n, n).iter().copied().collect(), role)
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(self.coeffs[0].len() * 2, self.coeffs[0].iter().chain(self.coeffs[1].iter()).copied())
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.nodal[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodal[0].is_empty()
    }

    pub fn first(&self) -> &[f64] {
        &self.nodal[0]
    }

    pub fn second(&self) -> &[f64] {
        &self.nodal[1]
    }

    pub fn first_coeffs(&self) -> &[f64] {
        &self.coeffs[0]
    }

    pub fn second_coeffs(&self) -> &[f64] {
        &self.coeffs[1]
    }

    /// `self + a * other`, applied to both representations.
    pub fn axpy(&self, a: f64, other: &FieldPair) -> FieldPair {
        let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect::<Vec<_>>();
        FieldPair {
            role: self.role,
            nodal: [comb(&self.nodal[0], &other.nodal[0]), comb(&self.nodal[1], &other.nodal[1])],
            coeffs: [comb(&self.coeffs[0], &other.coeffs[0]), comb(&self.coeffs[1], &other.coeffs[1])],
        }
    }

    pub fn scaled(&self, a: f64) -> FieldPair {
        let sc = |x: &[f64]| x.iter().map(|v| a * v).collect::<Vec<_>>();
        FieldPair {
            role: self.role,
            nodal: [sc(&self.nodal[0]), sc(&self.nodal[1])],
            coeffs: [sc(&self.coeffs[0]), sc(&self.coeffs[1])],
        }
    }

    /// Maximum absolute nodal value over both components.
    pub fn sup_norm(&self) -> f64 {
        self.nodal.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute coefficient over both components.
    pub fn coeff_sup_norm(&self) -> f64 {
        self.coeffs.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `e1 = (1, beta + b2/a2)`, the constant kernel direction.
pub fn kernel_e1(dom: &Domain1D, p: &Params) -> FieldPair {
    let n = dom.n();
    let mut c1 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    c1[0] = 1.0;
    c2[0] = p.kernel_slope();
    FieldPair { role: FieldRole::State, nodal: [vec![1.0; n], vec![p.kernel_slope(); n]], coeffs: [c1, c2] }
}

/// `e2 = (0, phi_j)`, the oscillating kernel direction.
pub fn kernel_e2(dom: &Domain1D, mode: &EigenMode) -> FieldPair {
    let n = dom.n();
    let mut c2 = vec![0.0; n];
    c2[mode.j()] = mode.amplitude();
    FieldPair { role: FieldRole::State, nodal: [vec![0.0; n], mode.phi().to_vec()], coeffs: [vec![0.0; n], c2] }
}

/// Kernel coordinates and the complementary remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub t: f64,
    pub remainder: FieldPair,
}

/// `s = mean(phi)`, `t = int (-(beta + b2/a2) phi + psi) phi_j`, remainder `Phi - s e1 - t e2`.
pub fn project_p(field: &FieldPair, mode: &EigenMode, p: &Params) -> Projection {
    let (s, t) = kernel_coordinates(field, mode, p);
    let k = p.kernel_slope();
    let j = mode.j();
    let amp = mode.amplitude();
    let mut rem = field.clone();
    rem.coeffs[0][0] -= s;
    rem.coeffs[1][0] -= s * k;
    rem.coeffs[1][j] -= t * amp;
    for v in rem.nodal[0].iter_mut() {
        *v -= s;
    }
    for (v, ph) in rem.nodal[1].iter_mut().zip(mode.phi()) {
        *v -= s * k + t * ph;
    }
    Projection { s, t, remainder: rem }
}

/// Only the pair `(s, t)` of [`project_p`].
pub fn kernel_coordinates(field: &FieldPair, mode: &EigenMode, p: &Params) -> (f64, f64) {
    let j = mode.j();
    let s = field.coeffs[0][0];
    // int cos^2(j pi x/L) dx = L/2, and phi_j = amp cos(...)
    let t = mode.amplitude() * 0.5 * mode.length() * (field.coeffs[1][j] - p.kernel_slope() * field.coeffs[0][j]);
    (s, t)
}

/// Diagonal symbol of L: for each mode m the triple (L11, L21, L22).
pub fn operator_symbol(dom: &Domain1D, mode: &EigenMode, p: &Params) -> Vec<(f64, f64, f64)> {
    let lj = mode.lambda();
    let k = p.kernel_slope();
    (0..dom.n())
        .map(|m| {
            let lm = dom.mode_eigenvalue(m);
            (-lm, -k * lj, lj - lm)
        })
        .collect()
}

/// `L Phi = (lap phi, lap psi + lambda_j psi - (beta + b2/a2) lambda_j phi)`.
pub fn apply_l(field: &FieldPair, mode: &EigenMode, p: &Params, dom: &Domain1D) -> FieldPair {
    let sym = operator_symbol(dom, mode, p);
    let (c1, c2) = (&field.coeffs[0], &field.coeffs[1]);
    let r1 = sym.iter().zip(c1).map(|(s, a)| s.0 * a).collect();
    let r2 = sym.iter().zip(c1.iter().zip(c2)).map(|(s, (a, b))| s.1 * a + s.2 * b).collect();
    FieldPair::from_coeffs(dom, r1, r2, FieldRole::Residual)
}

/// The unique `Phi*` with zero kernel coordinates and `L Phi* = rhs`.
///
/// The rhs must already have vanishing kernel coordinates (up to [`TOL_RANGE`]).
pub fn solve_l_x0(rhs: &FieldPair, mode: &EigenMode, p: &Params, dom: &Domain1D) -> Result<FieldPair> {
    let (s, t) = kernel_coordinates(rhs, mode, p);
    let scale = rhs.sup_norm().max(1.0);
    if s.abs() > TOL_RANGE * scale || t.abs() > TOL_RANGE * scale {
        return Err(SktError::RhsNotInRange { s, t });
    }
    let n = dom.n();
    let j = mode.j();
    let lj = mode.lambda();
    let k = p.kernel_slope();
    let (r1, r2) = (&rhs.coeffs[0], &rhs.coeffs[1]);
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; n];
    for m in 1..n {
        phi[m] = -r1[m] / dom.mode_eigenvalue(m);
    }
    for m in 0..n {
        if m != j {
            psi[m] = (r2[m] + k * lj * phi[m]) / (lj - dom.mode_eigenvalue(m));
        }
    }
    // the free e2-component is fixed by requiring t = 0
    psi[j] = k * phi[j];
    Ok(FieldPair::from_coeffs(dom, phi, psi, FieldRole::State))
}
