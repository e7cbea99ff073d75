//! Trace serialization.
//!
//! The CSV trace has a block of `# key: value` header comments (problem,
//! dimension, status, solver configuration as JSON) followed by one row per
//! iteration. Vector data goes to an optional JSON sidecar.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{IterationRecord, SolverConfig, Status, StepKind, Trace};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 9] =
    ["k", "step_kind", "f_center", "f_znext", "model_val", "v", "eta", "dist_sq", "norm_s_minus_g"];

fn fmt_f64(x: f64) -> String {
    // 17 significant digits round-trip every f64
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    let config = serde_json::to_string(&trace.config).expect("config serializes");
    writeln!(out, "# problem: {}", trace.problem)?;
    writeln!(out, "# dim: {}", trace.dim)?;
    writeln!(out, "# status: {}", trace.status)?;
    writeln!(out, "# config: {config}")?;
    if let Some(note) = &trace.note {
        writeln!(out, "# note: {}", note.replace('\n', " "))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_COLUMNS).map_err(io_err)?;
    for r in &trace.records {
        w.write_record([
            r.k.to_string(),
            r.step_kind.to_string(),
            fmt_f64(r.f_center),
            fmt_opt(r.f_znext),
            fmt_f64(r.model_val),
            fmt_f64(r.v),
            fmt_f64(r.eta),
            fmt_f64(r.dist_sq),
            fmt_opt(r.norm_s_minus_g),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { location: format!("line {line}"), message: message.into() }
}

/// Reads a CSV trace. Vector fields of the records are left empty.
pub fn read_trace_csv<R: Read>(mut input: R) -> Result<Trace> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;

    let mut problem = None;
    let mut dim = None;
    let mut status = None;
    let mut config: Option<SolverConfig> = None;
    let mut note = None;
    let mut header_lines = 0;
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix('#') else { break };
        header_lines += 1;
        let Some((key, value)) = rest.split_once(':') else {
            return Err(parse_err(i + 1, "header comment is not 'key: value'"));
        };
        let value = value.trim();
        match key.trim() {
            "problem" => problem = Some(value.to_string()),
            "dim" => dim = Some(value.parse::<usize>().map_err(|e| parse_err(i + 1, e.to_string()))?),
            "status" => status = Some(value.parse::<Status>().map_err(|e| parse_err(i + 1, e.to_string()))?),
            "config" => config = Some(serde_json::from_str(value).map_err(|e| parse_err(i + 1, e.to_string()))?),
            "note" => note = Some(value.to_string()),
            _ => {}
        }
    }
    let missing = |what: &str| parse_err(header_lines + 1, format!("missing '# {what}:' header"));
    let problem = problem.ok_or_else(|| missing("problem"))?;
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let status = status.ok_or_else(|| missing("status"))?;
    let config = config.ok_or_else(|| missing("config"))?;

    let body: String = text.lines().skip(header_lines).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| parse_err(header_lines + 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_COLUMNS {
        return Err(parse_err(header_lines + 1, format!("unexpected columns {headers:?}")));
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = header_lines + 2 + i;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        let num = |idx: usize| -> Result<f64> {
            row[idx].trim().parse::<f64>().map_err(|e| parse_err(line, format!("column {}: {e}", CSV_COLUMNS[idx])))
        };
        let opt = |idx: usize| -> Result<Option<f64>> {
            if row[idx].trim().is_empty() {
                Ok(None)
            } else {
                num(idx).map(Some)
            }
        };
        let k = row[0].trim().parse::<usize>().map_err(|e| parse_err(line, format!("column k: {e}")))?;
        let step_kind = row[1].trim().parse::<StepKind>().map_err(|e| parse_err(line, e.to_string()))?;
        records.push(IterationRecord {
            k,
            center: Arc::from([]),
            z_next: Vec::new(),
            f_center: num(2)?,
            f_znext: opt(3)?,
            model_val: num(4)?,
            v: num(5)?,
            eta: num(6)?,
            s: Vec::new(),
            g_next: None,
            step_kind,
            dist_sq: num(7)?,
            norm_s_minus_g: opt(8)?,
        });
    }
    let trace = Trace { problem, dim, config, status, records, note };
    trace.validate().map_err(|e| Error::Parse { location: "trace".into(), message: e.to_string() })?;
    Ok(trace)
}

#[derive(Serialize, Deserialize)]
struct VectorRow {
    k: usize,
    center: Arc<[f64]>,
    z_next: Vec<f64>,
    s: Vec<f64>,
    g_next: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct VectorFile {
    problem: String,
    records: Vec<VectorRow>,
}

pub fn write_vectors_json<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let file = VectorFile {
        problem: trace.problem.clone(),
        records: trace
            .records
            .iter()
            .map(|r| VectorRow {
                k: r.k,
                center: r.center.clone(),
                z_next: r.z_next.clone(),
                s: r.s.clone(),
                g_next: r.g_next.clone(),
            })
            .collect(),
    };
    serde_json::to_writer(out, &file).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Fills the vector fields of `trace` from a sidecar written by [`write_vectors_json`].
pub fn read_vectors_json<R: Read>(input: R, trace: &mut Trace) -> Result<()> {
    let file: VectorFile = serde_json::from_reader(input)
        .map_err(|e| Error::Parse { location: format!("line {}", e.line()), message: e.to_string() })?;
    let mismatch = |m: String| Error::Parse { location: "vector sidecar".into(), message: m };
    if file.problem != trace.problem {
        return Err(mismatch(format!("sidecar is for '{}', trace for '{}'", file.problem, trace.problem)));
    }
    if file.records.len() != trace.records.len() {
        return Err(mismatch(format!("{} vector rows for {} records", file.records.len(), trace.records.len())));
    }
    for (row, rec) in file.records.into_iter().zip(trace.records.iter_mut()) {
        if row.k != rec.k || row.center.len() != trace.dim || row.z_next.len() != trace.dim {
            return Err(mismatch(format!("row k = {} does not match the trace", row.k)));
        }
        rec.center = row.center;
        rec.z_next = row.z_next;
        rec.s = row.s;
        rec.g_next = row.g_next;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin;
    use crate::solver::{run, SolverConfig};

    fn sample_trace() -> Trace {
        let p = builtin("maxq", Some(2), 0).unwrap();
        let cfg = SolverConfig { eps: 1e-4, ..Default::default() };
        run(&p, &p.default_x1, &cfg).unwrap().1
    }

    #[test]
    fn csv_round_trip_is_exact_on_scalars() {
        let trace = sample_trace();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().any(|l| l == CSV_COLUMNS.join(",")));
        let back = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(back.problem, trace.problem);
        assert_eq!(back.config, trace.config);
        assert_eq!(back.status, trace.status);
        for (a, b) in back.records.iter().zip(&trace.records) {
            assert_eq!(a.eta.to_bits(), b.eta.to_bits());
            assert_eq!(a.f_znext.map(f64::to_bits), b.f_znext.map(f64::to_bits));
            assert_eq!(a.norm_s_minus_g, b.norm_s_minus_g);
            assert_eq!(a.step_kind, b.step_kind);
        }
        assert!(!back.has_vectors());

        let mut side = Vec::new();
        write_vectors_json(&trace, &mut side).unwrap();
        let mut back = back;
        read_vectors_json(side.as_slice(), &mut back).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn truncated_csv_is_rejected() {
        let trace = sample_trace();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = &text[..text.len() - 20];
        assert!(matches!(read_trace_csv(cut.as_bytes()), Err(Error::Parse { .. })));
        assert!(read_trace_csv("k,step_kind\n1,null\n".as_bytes()).is_err());
    }
}
