//! Deterministic text output: CSV with 17 significant digits, pretty JSON.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::evolution::TimeSample;
use crate::solver::BranchPoint;
use crate::spectra::EigenResult;

pub const BRANCH_HEADER: &str =
    "eps,d2,eta,alpha,s,mu,residual,u_min,u_max,w_max,eps_w_max,sigma,sigma_over_eps_lambda";
pub const SPECTRUM_HEADER: &str = "eps,sigma,lambda_ratio,gamma,tilde_dev,resid";
pub const SERIES_HEADER: &str = "t,pert_norm,u_min,u_max,w_max";
pub const PROFILE_HEADER: &str = "x,value";

/// 17 significant digits; round-trips every finite f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_text(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::with_capacity(rows.len() * 24 * 8 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt17(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    std::fs::write(path, csv_text(header, rows))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| crate::SktError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One branch CSV row; `sigma` may be missing (NaN is written).
pub fn branch_row(pt: &BranchPoint, lambda_j: f64) -> Vec<f64> {
    let sigma = pt.sigma.unwrap_or(f64::NAN);
    vec![
        pt.eps,
        pt.d2,
        pt.eta,
        pt.alpha(),
        pt.s_eps,
        pt.mu_eps,
        pt.residual_norm,
        pt.u_min(),
        pt.u_max(),
        pt.w_max(),
        pt.eps * pt.w_max(),
        sigma,
        sigma / (pt.eps * lambda_j),
    ]
}

pub fn spectrum_row(eps: f64, e: &EigenResult, lambda_j: f64) -> Vec<f64> {
    vec![eps, e.sigma, e.lambda_ratio(lambda_j), e.gamma, e.tilde_dev, e.residual]
}

pub fn series_rows(series: &[TimeSample]) -> Vec<Vec<f64>> {
    series.iter().map(|s| vec![s.t, s.pert_norm, s.u_min, s.u_max, s.w_max]).collect()
}

pub fn write_profile(path: &Path, x: &[f64], values: &[f64]) -> Result<()> {
    let rows: Vec<Vec<f64>> = x.iter().zip(values).map(|(a, b)| vec![*a, *b]).collect();
    write_csv(path, PROFILE_HEADER, &rows)
}

/// Parse a CSV produced by [`csv_text`]; returns header fields and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    Ok((header, rows))
}
