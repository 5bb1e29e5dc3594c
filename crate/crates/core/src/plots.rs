//! gnuplot-ready `.dat` files and a driver script from a run directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Result, SktError};
use crate::output::{fmt17, read_csv};

const SIGNS: [&str; 2] = ["plus", "minus"];

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| SktError::MissingArtifacts(format!("column {name}")))
}

fn dat(rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

fn pick(path: &Path, cols: &[&str]) -> Result<String> {
    let (header, rows) = read_csv(path)?;
    let idx: Vec<usize> = cols.iter().map(|c| column(&header, c)).collect::<Result<_>>()?;
    Ok(dat(rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect())))
}

fn sorted_matching(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries {
            let p = e?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.starts_with(prefix) && name.ends_with(suffix) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Write `plots/*.dat` and `plots/plots.gp` for whichever stages produced
/// output; returns the written paths relative to `run_dir`.
pub fn export_plots(run_dir: &Path) -> Result<Vec<String>> {
    let plots = run_dir.join("plots");
    let mut written: Vec<(String, String)> = Vec::new();
    let mut script = String::from("set terminal pngcairo size 900,600\nset key outside\n");

    for sign in SIGNS {
        let branch = run_dir.join(format!("branch_{sign}.csv"));
        if branch.is_file() {
            let name = format!("branch_{sign}.dat");
            written.push((name.clone(), pick(&branch, &["d2", "eps_w_max"])?));
            let _ = write!(
                script,
                "set output 'branch_{sign}.png'\nset xlabel 'd2'\nset ylabel 'eps max w'\nplot '{name}' u 1:2 w lp t '{sign}'\n"
            );
        }
        let spectrum = run_dir.join(format!("spectrum_{sign}.csv"));
        if spectrum.is_file() {
            let name = format!("eigen_ratio_{sign}.dat");
            written.push((name.clone(), pick(&spectrum, &["eps", "lambda_ratio"])?));
            let _ = write!(
                script,
                "set output 'eigen_ratio_{sign}.png'\nset logscale x\nset xlabel 'eps'\nset ylabel 'Lambda/lambda_j'\nplot '{name}' u 1:2 w lp t '{sign}'\nunset logscale x\n"
            );
        }
        let profiles = sorted_matching(&run_dir.join("profiles"), &format!("{sign}_"), "_u.csv")?;
        if !profiles.is_empty() {
            let mut text = String::new();
            for p in &profiles {
                let w = PathBuf::from(p.to_string_lossy().replace("_u.csv", "_w.csv"));
                let (_, ru) = read_csv(p)?;
                let (_, rw) = read_csv(&w)?;
                text.push_str(&dat(ru.iter().zip(&rw).map(|(a, b)| vec![a[0], a[1], b[1]])));
                text.push_str("\n\n");
            }
            let name = format!("profiles_{sign}.dat");
            written.push((name.clone(), text));
            let _ = write!(
                script,
                "set output 'profiles_{sign}.png'\nset xlabel 'x'\nset ylabel 'u'\nplot for [i=0:{}] '{name}' index i u 1:2 w l notitle\n",
                profiles.len() - 1
            );
        }
        for (k, series) in sorted_matching(run_dir, &format!("timeseries_{sign}_"), ".csv")?.iter().enumerate() {
            let name = format!("growth_{sign}_{k:02}.dat");
            written.push((name.clone(), pick(series, &["t", "pert_norm"])?));
            let _ = write!(
                script,
                "set output 'growth_{sign}_{k:02}.png'\nset logscale y\nset xlabel 't'\nset ylabel 'perturbation'\nplot '{name}' u 1:2 w l t '{sign}'\nunset logscale y\n"
            );
        }
    }
    if written.is_empty() {
        return Err(SktError::MissingArtifacts(run_dir.display().to_string()));
    }
    std::fs::create_dir_all(&plots)?;
    let mut out = Vec::new();
    for (name, text) in written {
        std::fs::write(plots.join(&name), text)?;
        out.push(format!("plots/{name}"));
    }
    std::fs::write(plots.join("plots.gp"), script)?;
    out.push("plots/plots.gp".into());
    Ok(out)
}
