//! Report emission: JSON and CSV writers with atomic file replacement.
//!
//! CSV output is RFC-4180 with '.' decimal separators and a mandatory header
//! row. All writers go through a write-temp-then-rename path so a crashed run
//! never leaves a half-written report behind.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::counterexample::ClaimReport;
use crate::error::{Error, Result};
use crate::multiscale::RunReport;
use crate::operators::LinearOp;
use crate::seqspace::SeqVector;
use crate::varsolve::TraceRow;

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    atomic_write(path, body.as_bytes())
}

fn write_csv_records<I, R, F>(path: &Path, header: &[&str], rows: I, mut to_fields: F) -> Result<()>
where
    I: IntoIterator<Item = R>,
    F: FnMut(R) -> Vec<String>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(to_fields(row))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidParameter(format!("csv buffer: {e}")))?;
    atomic_write(path, &bytes)
}

/// Fixed per-scale CSV: n, lambda_n, u_norm_F, sigma_norm_X, residual_H,
/// dual_norm_value, pairing_gap, certified, wall_time_ms.
pub fn write_steps_csv(path: &Path, report: &RunReport) -> Result<()> {
    let header = [
        "n",
        "lambda_n",
        "u_norm_F",
        "sigma_norm_X",
        "residual_H",
        "dual_norm_value",
        "pairing_gap",
        "certified",
        "wall_time_ms",
    ];
    write_csv_records(path, &header, &report.steps, |s| {
        let pairing_gap = (s.certificate.pairing_lhs - s.certificate.pairing_rhs).abs()
            / s.certificate.pairing_rhs.max(1.0);
        vec![
            s.n.to_string(),
            format!("{}", s.lambda_n),
            format!("{}", s.u_norm_f),
            format!("{}", s.sigma_norm_x),
            format!("{}", s.residual_h),
            format!("{}", s.certificate.dual_norm_value),
            format!("{pairing_gap}"),
            s.certificate.feasible.to_string(),
            format!("{}", s.wall_time * 1e3),
        ]
    })
}

/// One claim row per scale, in the fixed column order.
pub fn write_claims_csv(path: &Path, reports: &[ClaimReport]) -> Result<()> {
    write_csv_records(path, &ClaimReport::csv_header(), reports, |r| {
        r.csv_row().to_vec()
    })
}

/// Iteration trace for one inner solve.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let header = ["iteration", "objective", "dual_norm_value", "pairing_gap"];
    write_csv_records(path, &header, trace, |t| {
        vec![
            t.iteration.to_string(),
            format!("{}", t.objective),
            format!("{}", t.dual_norm_value),
            format!("{}", t.pairing_gap),
        ]
    })
}

/// Row-major dense dump of an operator, one CSV row per output index.
pub fn write_operator_csv(path: &Path, op: &LinearOp) -> Result<()> {
    let header: Vec<String> = (1..=op.dim_in()).map(|j| format!("c{j}")).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_records(path, &header_refs, op.dense_rows(), |row| {
        row.iter().map(|v| format!("{v}")).collect()
    })
}

/// Single-row CSV form of a vector, index 1 first.
pub fn write_vector_csv(path: &Path, v: &SeqVector) -> Result<()> {
    let header: Vec<String> = (1..=v.dim()).map(|i| format!("v{i}")).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_records(path, &header_refs, std::iter::once(v), |v| {
        v.to_csv_record()
    })
}

/// Reads a vector written by [`write_vector_csv`].
pub fn read_vector_csv(path: &Path) -> Result<SeqVector> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = reader.records();
    let record = records
        .next()
        .ok_or_else(|| Error::InvalidParameter("vector CSV has no data row".into()))??;
    let fields: Vec<&str> = record.iter().collect();
    SeqVector::from_csv_record(&fields)
}

/// Reads a single-column signal CSV (header row mandatory, one finite real
/// per data row).
pub fn read_signal_csv(path: &Path) -> Result<SeqVector> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut coeffs = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "expected a single column, row {} has {} fields",
                coeffs.len() + 2,
                record.len()
            )));
        }
        let value: f64 = record[0]
            .trim()
            .parse()
            .map_err(|e| Error::InvalidParameter(format!("bad sample {:?}: {e}", &record[0])))?;
        coeffs.push(value);
    }
    if coeffs.is_empty() {
        return Err(Error::InvalidParameter(
            "signal CSV contains no samples".into(),
        ));
    }
    SeqVector::new(coeffs)
}

/// Per-scale reconstruction table for a denoising run: index, f, then one
/// column per recorded scale.
pub fn write_reconstruction_csv(path: &Path, f: &SeqVector, report: &RunReport) -> Result<()> {
    let sums = report.partial_sums();
    let mut header = vec!["index".to_string(), "f".to_string()];
    header.extend(report.steps.iter().map(|s| format!("sigma_{}", s.n)));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_records(path, &header_refs, 1..=f.dim(), |i| {
        let mut row = vec![i.to_string(), format!("{}", f.get(i))];
        row.extend(sums.iter().map(|s| format!("{}", s.get(i))));
        row
    })
}

/// Analytic-vs-numeric comparison table: one row per scale with the `ℓ¹`
/// distance between the numeric partial sum and its closed-form counterpart.
pub fn write_comparison_csv(path: &Path, rows: &[(u32, f64)]) -> Result<()> {
    write_csv_records(path, &["n", "l1_distance_to_analytic"], rows, |(n, d)| {
        vec![n.to_string(), format!("{d}")]
    })
}
