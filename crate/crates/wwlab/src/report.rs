//! CSV, JSON and plot-data output for result records.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::error::{LabError, LabResult};
use crate::ops::{ResultRecord, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Plotdata,
}

#[derive(Serialize)]
struct SeriesLine<'a> {
    config_hash: &'a str,
    #[serde(rename = "N")]
    n: u64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct CheckLine<'a> {
    config_hash: &'a str,
    name: &'a str,
    #[serde(rename = "N")]
    n: u64,
    part: u32,
    #[serde(rename = "H")]
    h: Option<u64>,
    lhs: f64,
    rhs: f64,
    c_n: f64,
    slack: f64,
    tolerance: f64,
    rel_width: f64,
    holds: bool,
}

#[derive(Serialize)]
struct BoxLine {
    k: usize,
    #[serde(rename = "H")]
    h: String,
    q: i64,
    p: i64,
    exact: String,
    brute: String,
    bound_lhs: f64,
    bound_rhs: f64,
    slack: f64,
}

#[derive(Serialize)]
struct PlotLine<'a> {
    config_hash: &'a str,
    #[serde(rename = "N")]
    n: u64,
    log_n: f64,
    log_value: f64,
    fit: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> LabResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))?;
    Ok(())
}

/// Writes `records` under `out` and returns the files produced. An empty
/// selection is an error rather than an empty file.
pub fn emit_report(records: &[ResultRecord], format: Format, out: &Path) -> LabResult<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(LabError::NoRecords);
    }
    fs::create_dir_all(out).map_err(|e| LabError::io(out, e))?;
    match format {
        Format::Json => {
            let path = out.join("records.json");
            let body = serde_json::to_vec_pretty(records)?;
            fs::write(&path, body).map_err(|e| LabError::io(&path, e))?;
            Ok(vec![path])
        }
        Format::Csv => emit_csv(records, out),
        Format::Plotdata => emit_plotdata(records, out),
    }
}

fn emit_csv(records: &[ResultRecord], out: &Path) -> LabResult<Vec<PathBuf>> {
    let mut series = Vec::new();
    let mut checks = Vec::new();
    let mut boxes = Vec::new();
    for rec in records {
        for o in &rec.outputs {
            series.push(SeriesLine {
                config_hash: &rec.config_hash,
                n: o.n,
                lower: o.lower,
                upper: o.upper,
            });
        }
        match &rec.summary {
            Summary::Check { check } => {
                for r in &check.rows {
                    checks.push(CheckLine {
                        config_hash: &rec.config_hash,
                        name: check.name.as_str(),
                        n: r.n,
                        part: r.part,
                        h: r.h,
                        lhs: r.lhs,
                        rhs: r.rhs,
                        c_n: r.c_n,
                        slack: r.slack,
                        tolerance: r.tolerance,
                        rel_width: r.rel_width,
                        holds: r.holds(),
                    });
                }
            }
            Summary::BoxSweep { rows } => {
                for r in rows {
                    boxes.push(BoxLine {
                        k: r.sides.len(),
                        h: r.sides.iter().map(i64::to_string).collect::<Vec<_>>().join(";"),
                        q: r.q,
                        p: r.p,
                        exact: r.exact.to_string(),
                        brute: r.brute.to_string(),
                        bound_lhs: r.bound.lhs,
                        bound_rhs: r.bound.rhs,
                        slack: r.bound.slack,
                    });
                }
            }
            _ => {}
        }
    }
    let mut written = Vec::new();
    if !series.is_empty() {
        let p = out.join("series.csv");
        write_csv(&p, &series)?;
        written.push(p);
    }
    if !checks.is_empty() {
        let p = out.join("checks.csv");
        write_csv(&p, &checks)?;
        written.push(p);
    }
    if !boxes.is_empty() {
        let p = out.join("boxsweep.csv");
        write_csv(&p, &boxes)?;
        written.push(p);
    }
    if written.is_empty() {
        return Err(LabError::NoRecords);
    }
    Ok(written)
}

/// `(log N, log value)` for every positive lower endpoint, with the fitted
/// line `log C - alpha log N` for decay records.
fn emit_plotdata(records: &[ResultRecord], out: &Path) -> LabResult<Vec<PathBuf>> {
    let mut lines = Vec::new();
    for rec in records {
        let fit = match &rec.summary {
            Summary::Decay { fit } if fit.alpha_hat.is_finite() && fit.c_hat > 0.0 => Some(fit),
            _ => None,
        };
        for o in rec.outputs.iter().filter(|o| o.lower > 0.0) {
            let log_n = (o.n as f64).ln();
            lines.push(PlotLine {
                config_hash: &rec.config_hash,
                n: o.n,
                log_n,
                log_value: o.lower.ln(),
                fit: fit.map(|f| f.c_hat.ln() - f.alpha_hat * log_n),
            });
        }
    }
    if lines.is_empty() {
        return Err(LabError::NoRecords);
    }
    let p = out.join("plotdata.csv");
    write_csv(&p, &lines)?;
    Ok(vec![p])
}

fn fmt_n(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        format!("{v}")
    }
}

/// Plain-text table for the terminal.
pub fn summary_table(rec: &ResultRecord) -> String {
    let mut s = String::new();
    let mut line = |l: String| {
        s.push_str(&l);
        s.push('\n');
    };
    if !rec.outputs.is_empty() && !matches!(rec.summary, Summary::Hilbert { .. }) {
        line(format!("{:>8} {:>14} {:>14}", "N", "lower", "upper"));
        for o in &rec.outputs {
            line(format!("{:>8} {:>14} {:>14}", o.n, fmt_n(o.lower), fmt_n(o.upper)));
        }
    }
    match &rec.summary {
        Summary::Series => {}
        Summary::Check { check } => {
            line(format!(
                "{:>8} {:>5} {:>6} {:>14} {:>14} {:>14} {:>14} {:>5}",
                "N", "part", "H", "lhs", "rhs", "c_N", "slack", "holds"
            ));
            for r in &check.rows {
                line(format!(
                    "{:>8} {:>5} {:>6} {:>14} {:>14} {:>14} {:>14} {:>5}",
                    r.n,
                    r.part,
                    r.h.map_or("-".to_owned(), |h| h.to_string()),
                    fmt_n(r.lhs),
                    fmt_n(r.rhs),
                    fmt_n(r.c_n),
                    fmt_n(r.slack),
                    r.holds()
                ));
            }
            line(format!("endpoints: {}", check.endpoint_policy));
            if let Some(label) = &check.label {
                line(format!("note: {label}"));
            }
            line(format!(
                "{}: {} (c_max {}, stable {}, worst slack {})",
                check.name,
                if check.verdict { "PASS" } else { "FAIL" },
                fmt_n(check.c_max),
                check.stable,
                fmt_n(check.worst_slack())
            ));
        }
        Summary::Decay { fit } => line(format!(
            "decay over [{}, {}]: alpha {:.4}, C {:.4}, r^2 {:.4}, {} points",
            fit.window.0, fit.window.1, fit.alpha_hat, fit.c_hat, fit.r_squared, fit.points
        )),
        Summary::Precsim { witness } => match witness {
            Some(w) => line(format!(
                "dominated with C {:.4}, alpha {:.4}, gamma {:.4}, phi {:?}, N_0 {}",
                w.c, w.alpha, w.gamma, w.phi, w.n0
            )),
            None => line("no dominance witness on the grid".to_owned()),
        },
        Summary::Hilbert { sums, verdict } => {
            line(format!("{:>8} {:>14} {:>14} {:>14}", "N", "|S_N|", "Re S_N", "Im S_N"));
            for p in sums {
                line(format!(
                    "{:>8} {:>14} {:>14} {:>14}",
                    p.n,
                    fmt_n(p.re.hypot(p.im)),
                    fmt_n(p.re),
                    fmt_n(p.im)
                ));
            }
            if let Some(v) = verdict {
                line(format!(
                    "criterion: accept {} (summable {}, scaled Cauchy {}, Cauchy bound {})",
                    v.accept,
                    v.summable,
                    v.scaled_cauchy,
                    fmt_n(v.cauchy_sup)
                ));
            }
        }
        Summary::BoxSweep { rows } => {
            let mismatches = rows.iter().filter(|r| r.exact != r.brute).count();
            let bound_failures = rows.iter().filter(|r| r.bound.slack < 0.0).count();
            line(format!(
                "{} rows, {mismatches} exact/brute mismatches, {bound_failures} rows with negative bound slack",
                rows.len()
            ));
        }
    }
    s
}
