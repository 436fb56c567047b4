//! CSV and JSON artifacts.
//!
//! CSV numbers use 17 significant digits. JSON numbers use the shortest
//! representation that parses back to the same double.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::multipliers::PontryaginCertificate;
use crate::problem::ProblemSpec;
use crate::signal::{ControlSignal, TimeDomain};
use crate::simulate::Trajectory;
use crate::solve::{IterationRecord, Solution};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn domain_name(d: TimeDomain) -> &'static str {
    match d {
        TimeDomain::Physical => "physical",
        TimeDomain::Normalized => "normalized",
    }
}

fn header(out: &mut String, domain: Option<TimeDomain>, timestamp: Option<&str>) {
    if let Some(d) = domain {
        writeln!(out, "# domain={}", domain_name(d)).unwrap();
    }
    if let Some(ts) = timestamp {
        writeln!(out, "# generated={ts}").unwrap();
    }
}

fn row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let cols: Vec<String> = values.into_iter().map(num).collect();
    out.push_str(&cols.join(","));
}

/// Columns `t, x_1..x_n, u_1..u_m, g`. The control on a node is the value of
/// the step starting there; the last node repeats the last cell.
pub fn trajectory_csv(spec: &ProblemSpec, traj: &Trajectory, timestamp: Option<&str>) -> String {
    let mut out = String::new();
    header(&mut out, Some(traj.domain), timestamp);
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=spec.n).map(|i| format!("x_{i}")));
    cols.extend((1..=spec.m).map(|i| format!("u_{i}")));
    cols.push("g".to_string());
    writeln!(out, "{}", cols.join(",")).unwrap();
    for (i, t) in traj.times.iter().enumerate() {
        let cell = traj.cell_of_step(i.min(traj.n_steps() - 1));
        let x = &traj.states[i];
        let mut vals = vec![*t];
        vals.extend_from_slice(x);
        vals.extend_from_slice(traj.control.cell(cell));
        vals.push(spec.g(x));
        row(&mut out, vals);
        out.push('\n');
    }
    out
}

/// Columns `t, p_1..p_n, side`. Crossing nodes get a `left` and a `right`
/// row; other nodes one `none` row.
pub fn costate_csv(sol: &Solution, cert: &PontryaginCertificate, timestamp: Option<&str>) -> String {
    let tr = &sol.trajectory_physical;
    let n = cert.p_left.first().map_or(0, |p| p.len());
    let mut out = String::new();
    header(&mut out, Some(TimeDomain::Physical), timestamp);
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("p_{i}")));
    cols.push("side".to_string());
    writeln!(out, "{}", cols.join(",")).unwrap();
    let mut emit = |t: f64, p: &[f64], side: &str| {
        let mut vals = vec![t];
        vals.extend_from_slice(p);
        row(&mut out, vals);
        writeln!(out, ",{side}").unwrap();
    };
    for (i, t) in tr.times.iter().enumerate() {
        if cert.crossing_nodes.contains(&i) {
            emit(*t, &cert.p_left[i], "left");
            emit(*t, &cert.p_right[i], "right");
        } else {
            emit(*t, &cert.p_left[i], "none");
        }
    }
    out
}

pub fn iterations_csv(records: &[IterationRecord], timestamp: Option<&str>) -> String {
    let mut out = String::new();
    header(&mut out, None, timestamp);
    let r = records.first().map_or(0, |rec| rec.taus.len());
    let mut cols: Vec<String> = [
        "outer",
        "inner_iterations",
        "merit",
        "objective",
        "max_violation",
        "kkt_residual",
        "penalty",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=r).map(|j| format!("tau_{j}")));
    writeln!(out, "{}", cols.join(",")).unwrap();
    for rec in records {
        write!(out, "{},{},", rec.outer, rec.inner_iterations).unwrap();
        let mut vals = vec![rec.merit, rec.objective, rec.max_violation, rec.kkt_residual, rec.penalty];
        vals.extend_from_slice(&rec.taus);
        row(&mut out, vals);
        out.push('\n');
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Physical-time control from CSV rows `t_start, t_end, u_1..u_m`.
///
/// Lines starting with `#` and a non-numeric header row are skipped. Cells
/// must tile an interval without gaps.
pub fn control_from_csv(text: &str, m: usize) -> Result<ControlSignal> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut breaks: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidControl(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let fields = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::InvalidControl(format!("row {}: {e}", line + 1))),
        };
        if fields.len() != m + 2 {
            return Err(Error::InvalidControl(format!(
                "row {}: expected {} columns, got {}",
                line + 1,
                m + 2,
                fields.len()
            )));
        }
        match breaks.last() {
            None => breaks.push(fields[0]),
            Some(&b) if (b - fields[0]).abs() <= 1e-12 * b.abs().max(1.0) => {}
            Some(_) => {
                return Err(Error::InvalidControl(format!("row {}: cells are not contiguous", line + 1)));
            }
        }
        breaks.push(fields[1]);
        values.extend_from_slice(&fields[2..]);
    }
    ControlSignal::new(TimeDomain::Physical, breaks, m, values)
}

/// Parses `"a"` or `"a,b,..."` as a constant control value.
pub fn parse_constant(text: &str) -> Option<Vec<f64>> {
    text.split(',').map(|s| s.trim().parse::<f64>().ok()).collect()
}
