//! trace.csv, diagnostics.csv and report.json writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use containment_core::attacks::DutyFit;
use containment_core::metrics::{ContainmentReport, UubBound};
use containment_core::sim::{SimTrace, TraceRow, ValidationReport};

pub const REPORT_VERSION: &str = "1";

/// 17 significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column names of trace.csv for `leaders` leaders with `p` outputs and
/// followers with the given input sizes.
pub fn trace_header(leaders: usize, p: usize, inputs: &[usize]) -> Vec<String> {
    let n = inputs.len();
    let mut h = vec!["t".to_string(), "dos".to_string()];
    for k in 1..=leaders {
        h.extend((1..=p).map(|d| format!("yk_{k}_{d}")));
    }
    for i in 1..=n {
        h.extend((1..=p).map(|d| format!("y_{i}_{d}")));
    }
    h.extend((1..=n).map(|i| format!("e_{i}_norm")));
    h.extend((1..=n).map(|i| format!("obs_err_{i}")));
    h.push("z_err_norm".into());
    h.extend((1..=n).map(|i| format!("reg_res_{i}")));
    h.extend((1..=n).map(|i| format!("eps_norm_{i}")));
    h.extend((1..=n).map(|i| format!("rho_{i}")));
    for (i, &m) in inputs.iter().enumerate() {
        h.extend((1..=m).map(|d| format!("u_{}_{d}", i + 1)));
    }
    h
}

pub fn trace_record(r: &TraceRow) -> Vec<String> {
    let mut rec = vec![num(r.t), if r.dos { "1" } else { "0" }.to_string()];
    rec.extend(r.yk.iter().flatten().map(|&v| num(v)));
    rec.extend(r.y.iter().flatten().map(|&v| num(v)));
    rec.extend(r.e_norm.iter().map(|&v| num(v)));
    rec.extend(r.obs_err.iter().map(|&v| num(v)));
    rec.push(num(r.z_err_norm));
    rec.extend(r.reg_res.iter().map(|&v| num(v)));
    rec.extend(r.eps_norm.iter().map(|&v| num(v)));
    rec.extend(r.rho.iter().map(|&v| num(v)));
    rec.extend(r.u.iter().flatten().map(|&v| num(v)));
    rec
}

pub fn diagnostics_header(p: usize, n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=n {
        h.extend((1..=p).map(|d| format!("xi_bar_{i}_{d}")));
    }
    h.extend((1..=n).map(|i| format!("chi_hat_norm_{i}")));
    h.extend((1..=n).map(|i| format!("reg_err_{i}")));
    h.push("obs_deriv_norm".into());
    h
}

pub fn diagnostics_record(r: &TraceRow) -> Vec<String> {
    let mut rec = vec![num(r.t)];
    rec.extend(r.xi_bar.iter().flatten().map(|&v| num(v)));
    rec.extend(r.chi_hat_norm.iter().map(|&v| num(v)));
    rec.extend(r.reg_err.iter().map(|&v| num(v)));
    rec.push(num(r.obs_deriv_norm));
    rec
}

fn write_csv(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(&header)?;
    for rec in rows {
        w.write_record(&rec)?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub version: &'static str,
    pub name: String,
    pub bounds_satisfied: bool,
    pub dt: f64,
    pub horizon: f64,
    pub rows: usize,
    pub dos_fit: Option<DutyFit>,
    pub bounds: &'a [UubBound<f64>],
    pub summary: &'a ContainmentReport,
    pub validation: &'a ValidationReport,
}

impl<'a> RunReport<'a> {
    pub fn new(name: String, trace: &'a SimTrace, dos_fit: Option<DutyFit>) -> Self {
        Self {
            version: REPORT_VERSION,
            name,
            bounds_satisfied: trace.summary.bounds_satisfied,
            dt: trace.dt,
            horizon: trace.horizon,
            rows: trace.rows.len(),
            dos_fit,
            bounds: &trace.bounds,
            summary: &trace.summary,
            validation: &trace.validation,
        }
    }
}

/// Writes trace.csv, diagnostics.csv and report.json into `dir`.
pub fn write_run(dir: &Path, trace: &SimTrace, report: &RunReport<'_>) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let first = trace.rows.first().context("empty trace")?;
    let p = first.yk.first().map_or(0, Vec::len);
    let inputs: Vec<usize> = first.u.iter().map(Vec::len).collect();
    write_csv(
        &dir.join("trace.csv"),
        trace_header(first.yk.len(), p, &inputs),
        trace.rows.iter().map(trace_record),
    )?;
    write_csv(
        &dir.join("diagnostics.csv"),
        diagnostics_header(p, inputs.len()),
        trace.rows.iter().map(diagnostics_record),
    )?;
    let path = dir.join("report.json");
    let mut f = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_order() {
        let h = trace_header(2, 1, &[1, 2]);
        assert_eq!(
            h,
            [
                "t", "dos", "yk_1_1", "yk_2_1", "y_1_1", "y_2_1", "e_1_norm", "e_2_norm", "obs_err_1",
                "obs_err_2", "z_err_norm", "reg_res_1", "reg_res_2", "eps_norm_1", "eps_norm_2",
                "rho_1", "rho_2", "u_1_1", "u_2_1", "u_2_2"
            ]
        );
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }
}
