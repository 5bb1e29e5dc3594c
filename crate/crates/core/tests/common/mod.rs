//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except for plain data types.
#![allow(dead_code)]

use twofloat::TwoFloat;

use sktshadow::Params;

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

fn tf(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

/// Quotient refined by residual correction; the crate's own `/` on two
/// double-doubles is only good to about f64 precision.
fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let mut x = a / b;
    for _ in 0..2 {
        let r = a - b * x;
        x += TwoFloat::from(f64::from(r) / f64::from(b));
    }
    x
}

/// `(h1e, h2e)` in double-double from the defining quadratic.
pub fn h_eps_extended(phi: f64, psi: f64, eps: f64, beta: f64) -> (TwoFloat, TwoFloat) {
    let (p, q, e, b) = (tf(phi), tf(psi), tf(eps), tf(beta));
    let d = q - b * p;
    let s = ((d + e) * (d + e) + tf(4.0) * e * b * p).sqrt();
    let u = div(tf(2.0) * p, d + e + s);
    // psi = (1 + beta u) w
    let w = div(q, tf(1.0) + b * u);
    (u, w)
}

/// The reaction `f2` in its defining 1/eps difference form, evaluated in
/// double-double with `1/d2 = lambda/(a2 - eps lambda)`.
pub fn f2_naive_extended(phi: f64, psi: f64, eps: f64, lambda: f64, p: &Params) -> f64 {
    let (h1, h2) = h_eps_extended(phi, psi, eps, p.beta);
    let d = tf(psi) - tf(p.beta) * tf(phi);
    let h10 = div(tf(phi), d);
    let h20 = d;
    let (a2, b2, lam, e) = (tf(p.a2), tf(p.b2), tf(lambda), tf(eps));
    let inv_d2 = div(lam, a2 - e * lam);
    let first = h2 * inv_d2 * (a2 - b2 * h1);
    let second = div(h20 * lam, a2) * (a2 - b2 * h10);
    div(first - second, e).into()
}

/// The limiting reaction `f2` written directly as three terms.
pub fn f2_limit_three_terms(phi: f64, psi: f64, lambda: f64, p: &Params) -> f64 {
    let d = psi - p.beta * phi;
    lambda * lambda / p.a2 * d - lambda * lambda * p.b2 / (p.a2 * p.a2) * phi + (p.beta + p.b2 / p.a2) * lambda * phi / d
}

/// Central difference of a scalar function.
pub fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
