//! Plot data for ln Z against outer iteration, with a least-squares fit of
//! `ln Z = a + b / (M K)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use snowball_ns::stats::linear_fit;
use snowball_ns::SnowballReport;

use crate::manifest::RunManifest;
use crate::rundir::REPORTS;
use crate::{CmdResult, Format, TraceArgs};

pub fn parse_reports(text: &str) -> anyhow::Result<Vec<SnowballReport>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: SnowballReport = serde_json::from_str(line)
            .with_context(|| format!("line {}: malformed report", i + 1))?;
        out.push(r);
    }
    Ok(out)
}

/// Coefficients `(a, b)`, or `None` when fewer than two iterations exist.
pub fn fit(reports: &[SnowballReport], m_steps: usize) -> Option<(f64, f64)> {
    if reports.len() < 2 {
        return None;
    }
    let x: Vec<f64> = reports
        .iter()
        .map(|r| 1.0 / (m_steps as f64 * r.k as f64))
        .collect();
    let y: Vec<f64> = reports.iter().map(|r| r.log_z).collect();
    linear_fit(&x, &y)
}

pub fn cmd_trace(a: &TraceArgs, out: &mut dyn Write) -> CmdResult {
    let (file, dir) = if a.input.is_dir() {
        (a.input.join(REPORTS), a.input.clone())
    } else {
        let dir = a
            .input
            .parent()
            .map_or_else(|| Path::new(".").to_path_buf(), Path::to_path_buf);
        (a.input.clone(), dir)
    };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let reports = parse_reports(&text)?;
    if reports.is_empty() {
        return Err(anyhow!("{} holds no reports", file.display()).into());
    }
    let m_steps = match a.steps {
        Some(m) => m,
        None => match RunManifest::load(&dir) {
            Ok(m) => m.config.m_steps,
            Err(_) => {
                return Err(anyhow!("no manifest next to {}; pass --steps", file.display()).into())
            }
        },
    };
    let coef = fit(&reports, m_steps);
    if coef.is_none() {
        eprintln!("note: fit skipped, it needs at least two outer iterations");
    }
    emit(out, &reports, m_steps, coef, a.format).context("writing trace")?;
    Ok(())
}

fn emit(
    out: &mut dyn Write,
    reports: &[SnowballReport],
    m_steps: usize,
    coef: Option<(f64, f64)>,
    format: Format,
) -> anyhow::Result<()> {
    let header = ["outer_iteration", "k", "log_z", "log_z_err", "log_z_fit"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            let fitted = coef.map_or(String::new(), |(a, b)| {
                (a + b / (m_steps as f64 * r.k as f64)).to_string()
            });
            [
                r.outer_iteration.to_string(),
                r.k.to_string(),
                r.log_z.to_string(),
                r.log_z_err.to_string(),
                fitted,
            ]
        })
        .collect();
    match format {
        Format::Csv => {
            writeln!(out, "{}", header.join(","))?;
            for row in &rows {
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Format::Table => {
            let widths: Vec<usize> = (0..header.len())
                .map(|c| {
                    rows.iter()
                        .map(|r| r[c].len())
                        .chain([header[c].len()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |cells: Vec<&str>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            writeln!(out, "{}", line(header.to_vec()))?;
            for row in &rows {
                writeln!(out, "{}", line(row.iter().map(String::as_str).collect()))?;
            }
        }
    }
    match coef {
        Some((a, b)) => writeln!(
            out,
            "# fit ln Z = a + b/(M K) with M={m_steps}: a={a} b={b}"
        )?,
        None => writeln!(out, "# fit skipped: fewer than two outer iterations")?,
    }
    Ok(())
}
