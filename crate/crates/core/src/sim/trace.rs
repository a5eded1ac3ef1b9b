//! Trace CSV: one row per step with states, estimates, errors, per-sensor
//! residues and triggers, and the attack on the consumed measurement.

use std::io::Write;

use nalgebra::DVector;

use super::{SimulationTrace, TraceRow};
use crate::error::{Error, Result};

fn header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    for prefix in ["x_true", "x_hat_secure", "x_hat_luen"] {
        h.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    h.push("err_inf_secure".into());
    h.push("err_inf_luen".into());
    h.extend((0..m).map(|i| format!("residue_{i}")));
    h.extend((0..m).map(|i| format!("trigger_{i}")));
    h.push("attack_support".into());
    h.push("attack_values".into());
    h
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(trace.n, trace.m))?;
    let mut rec: Vec<String> = Vec::new();
    for r in &trace.rows {
        rec.clear();
        rec.push(r.k.to_string());
        rec.extend(r.x_true.iter().map(f64::to_string));
        rec.extend(r.x_hat_secure.iter().map(f64::to_string));
        match &r.x_hat_luen {
            Some(x) => rec.extend(x.iter().map(f64::to_string)),
            None => rec.extend(std::iter::repeat_n(String::new(), trace.n)),
        }
        rec.push(r.err_inf_secure.to_string());
        rec.push(r.err_inf_luen.map(|e| e.to_string()).unwrap_or_default());
        rec.extend(r.residues.iter().map(f64::to_string));
        rec.extend(r.triggers.iter().map(|&t| u8::from(t).to_string()));
        rec.push(join(&r.support));
        rec.push(join(&r.attack_values));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

fn parse_f64(s: &str, line: u64, col: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("line {line}: column {col}: invalid number {s:?}")))
}

fn parse_list<T: std::str::FromStr>(s: &str, line: u64, col: &str) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::Parse(format!("line {line}: column {col}: invalid entry {p:?}"))))
        .collect()
}

/// Reads a trace written by [`write_trace_csv`]. Columns must match exactly.
pub fn parse_trace_csv(text: &str) -> Result<SimulationTrace> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let n = head.iter().filter(|h| h.starts_with("x_true_")).count();
    let m = head.iter().filter(|h| h.starts_with("residue_")).count();
    let expected = header(n, m);
    if head != expected {
        return Err(Error::Parse("line 1: trace header does not match the expected column layout".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let k = cell(0).trim().parse::<u64>().map_err(|_| Error::Parse(format!("line {line}: column k: invalid step {:?}", cell(0))))?;
        let block = |start: usize, name: &str| -> Result<DVector<f64>> {
            let vals = (0..n).map(|i| parse_f64(cell(start + i), line, &format!("{name}_{i}"))).collect::<Result<Vec<_>>>()?;
            Ok(DVector::from_vec(vals))
        };
        let x_true = block(1, "x_true")?;
        let x_hat_secure = block(1 + n, "x_hat_secure")?;
        let luen_cells: Vec<&str> = (0..n).map(|i| cell(1 + 2 * n + i)).collect();
        let x_hat_luen = if n > 0 && luen_cells.iter().all(|c| c.trim().is_empty()) { None } else { Some(block(1 + 2 * n, "x_hat_luen")?) };
        let base = 1 + 3 * n;
        let err_inf_secure = parse_f64(cell(base), line, "err_inf_secure")?;
        let err_inf_luen = match cell(base + 1).trim() {
            "" => None,
            s => Some(parse_f64(s, line, "err_inf_luen")?),
        };
        let residues = (0..m).map(|i| parse_f64(cell(base + 2 + i), line, &format!("residue_{i}"))).collect::<Result<Vec<_>>>()?;
        let triggers = (0..m)
            .map(|i| match cell(base + 2 + m + i).trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                s => Err(Error::Parse(format!("line {line}: column trigger_{i}: expected 0 or 1, got {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let support: Vec<usize> = parse_list(cell(base + 2 + 2 * m), line, "attack_support")?;
        let attack_values: Vec<f64> = parse_list(cell(base + 3 + 2 * m), line, "attack_values")?;
        if attack_values.len() != support.len() {
            return Err(Error::Parse(format!("line {line}: attack_values and attack_support differ in length")));
        }
        if let Some(&bad) = support.iter().find(|&&i| i >= m) {
            return Err(Error::Parse(format!("line {line}: attacked sensor {bad} out of range")));
        }
        let residues_after = residues.iter().zip(&triggers).map(|(&r, &t)| if t { 0.0 } else { r }).collect();
        rows.push(TraceRow {
            k,
            x_true,
            x_hat_secure,
            x_hat_luen,
            err_inf_secure,
            err_inf_luen,
            residues,
            residues_after,
            triggers,
            support,
            attack_values,
            local_errors: Vec::new(),
            err_modal_secure: f64::NAN,
        });
    }
    // the baseline only drops out, so its last filled row precedes the divergence
    let luenberger_diverged_at = match rows.iter().position(|r| r.x_hat_luen.is_none()) {
        Some(i) if i > 0 => Some(rows[i].k),
        _ => None,
    };
    Ok(SimulationTrace { n, m, gamma: None, thresholds: None, rows, abort: None, luenberger_diverged_at })
}
