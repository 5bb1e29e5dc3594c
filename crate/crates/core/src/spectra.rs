//! Generalized eigenproblem `sigma T Phi = A Phi` for the linearization at a
//! branch point, selection of the small unstable eigenvalue `sigma ~ eps lambda_j`,
//! and its decomposition into kernel coordinates and a range remainder.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector, Matrix2};
use serde::Serialize;

use crate::basis::{kernel_coordinates, project_p, Domain1D, EigenMode, FieldPair, FieldRole};
use crate::error::{Result, SktError};
use crate::model::{Local, Params};
use crate::reduction::{c0_value, mode_integrals, ReducedRoot};
use crate::solver::{assemble_blocks, jacobian, BranchPoint, StationaryProblem};

/// Stiffness `A` (the residual Jacobian) and mass `T` in coefficient space.
#[derive(Debug, Clone)]
pub struct SpectralPencil {
    pub a: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub eps: f64,
    pub eta: f64,
    pub lambda_j: f64,
    /// Limiting mode amplitude used to normalize the eigenfunction.
    pub mu0: f64,
    pub point: BranchPoint,
    params: Params,
    mode: EigenMode,
    dom: Arc<Domain1D>,
}

impl SpectralPencil {
    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn mode(&self) -> &EigenMode {
        &self.mode
    }

    pub fn dom(&self) -> &Domain1D {
        &self.dom
    }

    /// Replace the stiffness matrix (e.g. for perturbation experiments).
    pub fn with_stiffness(mut self, a: DMatrix<f64>) -> Self {
        self.a = a;
        self
    }
}

/// Nodal mass blocks `[(eps/d1) dh1; (1/d2) dh2]` on the evaluation grid.
pub fn mass_blocks(phi: &FieldPair, prob: &StationaryProblem) -> Result<Vec<Matrix2<f64>>> {
    let dom = prob.dom();
    let (a, b) = if dom.is_dealiased() {
        let to = dom.to_eval_matrix();
        (
            (to * DVector::from_column_slice(phi.first_coeffs())).data.into(),
            (to * DVector::from_column_slice(phi.second_coeffs())).data.into(),
        )
    } else {
        (phi.first().to_vec(), phi.second().to_vec())
    };
    let p = prob.params();
    let ctx = prob.ctx();
    let top = ctx.eps() / p.d1;
    let bottom = ctx.inv_d2();
    a.iter()
        .zip(&b)
        .enumerate()
        .map(|(node, (&x, &y))| {
            let loc = Local::new(x, y, ctx, p).map_err(|_| SktError::PositivityLoss { node })?;
            let dh = loc.dh();
            Ok(Matrix2::new(top * dh[(0, 0)], top * dh[(0, 1)], bottom * dh[(1, 0)], bottom * dh[(1, 1)]))
        })
        .collect()
}

/// Build the pencil at a converged point (eta taken from the point).
pub fn assemble_pencil(point: &BranchPoint, prob: &StationaryProblem, mu0: f64) -> Result<SpectralPencil> {
    let prob = prob.with_eta(0.0)?.with_eps(point.eps)?.with_eta(point.eta)?;
    let a = jacobian(&point.phi, &prob)?;
    let dom = prob.dom_arc();
    let blocks = mass_blocks(&point.phi, &prob)?;
    let t = assemble_blocks(&blocks, &dom);
    Ok(SpectralPencil {
        a,
        t,
        eps: point.eps,
        eta: point.eta,
        lambda_j: prob.mode().lambda(),
        mu0,
        point: point.clone(),
        params: *prob.params(),
        mode: prob.mode().clone(),
        dom,
    })
}

/// All finite eigenvalues via the shifted inverse `(A - shift T)^-1 T`.
///
/// Eigenvalues `nu` of the shifted inverse map to `sigma = shift + 1/nu`;
/// `nu = 0` corresponds to infinite eigenvalues and is dropped. The shift
/// must stay away from eigenvalues: a near-resonant shift swamps the rest.
pub fn pencil_spectrum(a: &DMatrix<f64>, t: &DMatrix<f64>, shift: f64) -> Result<Vec<Complex<f64>>> {
    let m = a - t * shift;
    let k = m.lu().solve(t).ok_or(SktError::Singular("shifted pencil"))?;
    let nus = k.complex_eigenvalues();
    let big = nus.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    let mut out: Vec<Complex<f64>> = nus
        .iter()
        .filter(|z| z.norm() > 1e-13 * big)
        .map(|z| Complex::new(shift, 0.0) + Complex::new(1.0, 0.0) / z)
        .collect();
    out.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(out)
}

fn is_real(z: &Complex<f64>) -> bool {
    z.im.abs() <= 1e-8 * z.norm().max(f64::MIN_POSITIVE)
}

/// Refine an approximate eigenvalue by inverse iteration followed by Newton
/// on the bordered system; returns `(sigma, eigenvector)` in coefficient space.
pub fn refine_eigenpair(a: &DMatrix<f64>, t: &DMatrix<f64>, guess: f64) -> Result<(f64, DVector<f64>)> {
    let n = a.nrows();
    let lu = (a - t * guess).lu();
    let mut x = DVector::from_fn(n, |i, _| 1.0 / (1.0 + i as f64));
    for _ in 0..3 {
        let y = lu.solve(&(t * &x)).ok_or(SktError::Singular("inverse iteration"))?;
        let nrm = y.norm();
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(SktError::Singular("inverse iteration"));
        }
        x = y / nrm;
    }
    let c = x.clone();
    let mut sigma = guess;
    for _ in 0..3 {
        let m = a - t * sigma;
        let f = &m * &x;
        let mut big = DMatrix::zeros(n + 1, n + 1);
        big.view_mut((0, 0), (n, n)).copy_from(&m);
        big.view_mut((0, n), (n, 1)).copy_from(&(-(t * &x)));
        big.view_mut((n, 0), (1, n)).copy_from(&c.transpose());
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-f));
        rhs[n] = 1.0 - c.dot(&x);
        let Some(d) = big.lu().solve(&rhs) else { break };
        x += d.rows(0, n);
        sigma += d[n];
    }
    Ok((sigma, x))
}

/// Relative residual `|(A - sigma T) x|_inf / |A x|_inf`.
pub fn eigen_residual(a: &DMatrix<f64>, t: &DMatrix<f64>, sigma: f64, x: &DVector<f64>) -> f64 {
    let ax = a * x;
    let r = &ax - (t * x) * sigma;
    r.amax() / ax.amax()
}

/// The selected eigenpair with its kernel decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenResult {
    pub sigma: f64,
    /// sigma / eps
    pub lambda: f64,
    #[serde(skip)]
    pub eigfield: FieldPair,
    pub gamma: f64,
    #[serde(skip)]
    pub tilde: FieldPair,
    /// Mean of the second component of `tilde`.
    pub tilde_mean: f64,
    /// `sup |psi~ - mean| / |mean|`.
    pub tilde_dev: f64,
    pub residual: f64,
    pub complex_pair_warning: bool,
    /// Number of finite eigenvalues with positive real part.
    pub unstable_count: usize,
}

impl EigenResult {
    /// `Lambda / lambda_j = sigma / (eps lambda_j)`
    pub fn lambda_ratio(&self, lambda_j: f64) -> f64 {
        self.lambda / lambda_j
    }
}

/// Locate the real eigenvalue nearest `eps lambda_j` inside `[0.2, 5] eps lambda_j`.
pub fn eigen_near_zero(pencil: &SpectralPencil) -> Result<EigenResult> {
    if !(pencil.eps > 0.0) {
        return Err(SktError::EpsilonZero);
    }
    let target = pencil.eps * pencil.lambda_j;
    let (lo, hi) = (0.2 * target, 5.0 * target);
    let spectrum = pencil_spectrum(&pencil.a, &pencil.t, target)?;
    let unstable_count = spectrum.iter().filter(|z| z.re > 0.0).count();
    let dist = |z: &Complex<f64>| (z - Complex::new(target, 0.0)).norm();
    let chosen = spectrum
        .iter()
        .filter(|z| is_real(z) && z.re >= lo && z.re <= hi)
        .min_by(|x, y| dist(x).total_cmp(&dist(y)))
        .ok_or(SktError::NoRealEigenvalueNearTarget { lo, hi })?;
    let complex_pair_warning =
        spectrum.iter().any(|z| !is_real(z) && z.re >= lo && z.re <= hi && dist(z) < dist(chosen));

    let (sigma, x) = refine_eigenpair(&pencil.a, &pencil.t, chosen.re)?;
    let residual = eigen_residual(&pencil.a, &pencil.t, sigma, &x);
    let dom = &pencil.dom;
    let raw = FieldPair::from_stacked(dom, &x, FieldRole::Eigenfunction);
    decompose(pencil, sigma, raw, residual, complex_pair_warning, unstable_count)
}

fn decompose(
    pencil: &SpectralPencil,
    sigma: f64,
    raw: FieldPair,
    residual: f64,
    complex_pair_warning: bool,
    unstable_count: usize,
) -> Result<EigenResult> {
    let p = &pencil.params;
    let (_, t) = kernel_coordinates(&raw, &pencil.mode, p);
    let want = p.b2 / p.a2 * pencil.mu0;
    if t == 0.0 || !t.is_finite() {
        return Err(SktError::Singular("eigenfunction has no oscillating kernel component"));
    }
    let eigfield = raw.scaled(want / t);
    let proj = project_p(&eigfield, &pencil.mode, p);
    let tilde = proj.remainder.scaled(1.0 / pencil.eps);
    let tilde_mean = tilde.second_coeffs()[0];
    let tilde_dev = tilde.second().iter().fold(0.0_f64, |m, v| m.max((v - tilde_mean).abs())) / tilde_mean.abs();
    Ok(EigenResult {
        sigma,
        lambda: sigma / pencil.eps,
        eigfield,
        gamma: proj.s - 1.0,
        tilde,
        tilde_mean,
        tilde_dev,
        residual,
        complex_pair_warning,
        unstable_count,
    })
}

/// Refined eigenpair near an arbitrary real guess (e.g. a stable eigenvalue).
pub fn eigenpair_near(pencil: &SpectralPencil, guess: f64) -> Result<(f64, FieldPair)> {
    let (sigma, x) = refine_eigenpair(&pencil.a, &pencil.t, guess)?;
    Ok((sigma, FieldPair::from_stacked(&pencil.dom, &x, FieldRole::Eigenfunction)))
}

/// `C0`, whose negativity forces the limiting kernel coordinate of the
/// eigenfunction to vanish.
pub fn c0_diagnostic(root: &ReducedRoot, p: &Params, mode: &EigenMode) -> Result<f64> {
    let q = mode_integrals(root.mu0, mode)?;
    let c0 = c0_value(p, mode, root.s0, &q);
    if !(c0 < 0.0) {
        return Err(SktError::SignViolation(c0));
    }
    Ok(c0)
}

/// Finite eigenvalues of the eps = 0 pencil `sigma T0 Phi = L Phi` restricted
/// to the complement of the kernel (and projected onto the range), sorted
/// descending.
pub fn restricted_limit_spectrum(p: &Params, mode: &EigenMode, dom: &Domain1D) -> Result<Vec<f64>> {
    let n = dom.n();
    let j = mode.j();
    let lj = mode.lambda();
    let k = p.kernel_slope();
    let mut l = DMatrix::zeros(2 * n, 2 * n);
    let mut t0 = DMatrix::zeros(2 * n, 2 * n);
    for m in 0..n {
        let lm = dom.mode_eigenvalue(m);
        l[(m, m)] = -lm;
        l[(n + m, m)] = -k * lj;
        l[(n + m, n + m)] = lj - lm;
        t0[(n + m, m)] = -p.beta * lj / p.a2;
        t0[(n + m, n + m)] = lj / p.a2;
    }
    // basis of the complement: phi_m (m >= 1, with psi_j = k phi_j tied in) and psi_m (m != j)
    let dim = 2 * n - 2;
    let mut q = DMatrix::zeros(2 * n, dim);
    let mut col = 0;
    for m in 1..n {
        q[(m, col)] = 1.0;
        if m == j {
            q[(n + j, col)] = k;
        }
        col += 1;
    }
    for m in 0..n {
        if m != j {
            q[(n + m, col)] = 1.0;
            col += 1;
        }
    }
    // coordinates of (I - P) r on the range: r1_m (m >= 1), r2_0 - k r1_0, r2_m (m != 0, j)
    let mut left = DMatrix::zeros(dim, 2 * n);
    let mut row = 0;
    for m in 1..n {
        left[(row, m)] = 1.0;
        row += 1;
    }
    for m in 0..n {
        if m == j {
            continue;
        }
        left[(row, n + m)] = 1.0;
        if m == 0 {
            left[(row, 0)] = -k;
        }
        row += 1;
    }
    let a = &left * &l * &q;
    let b = &left * &t0 * &q;
    let shift = 0.1234567 * lj;
    let mut out: Vec<f64> = pencil_spectrum(&a, &b, shift)?.into_iter().map(|z| z.re).collect();
    out.sort_by(|x, y| y.total_cmp(x));
    Ok(out)
}
