//! Report assembly: the JSON envelope every subcommand writes and the CSV
//! emitter for tabular curves.
//!
//! A report splits into two halves. The `payload` carries everything
//! determined by the inputs: schema version, the echoed configuration, the
//! results, and the overall pass flag. The `meta` half carries wall-clock
//! timing. Reruns with identical inputs produce byte-identical payloads;
//! only `meta` may differ, so consumers diff `payload` alone.
//!
//! CSV output is headered, LF-terminated, uses `.` as the decimal
//! separator, and prints floats with 17 significant digits so they
//! round-trip exactly. Non-finite values are refused: a NaN in a table
//! means an upstream solver failed, and silently writing it would let a
//! broken run masquerade as data.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Version of the payload layout; bumped on breaking change.
pub const SCHEMA_VERSION: u32 = 1;

/// The deterministic half of a report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Payload {
    /// Layout version of this structure.
    pub schema_version: u32,
    /// Which subcommand produced the report.
    pub command: String,
    /// Echo of the effective configuration, defaults included.
    pub config: serde_json::Value,
    /// Subcommand-specific results.
    pub results: serde_json::Value,
    /// Whether every asserted check in `results` held.
    pub pass: bool,
}

/// The run-dependent half of a report.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Meta {
    /// Wall-clock duration of the run in milliseconds.
    pub wall_clock_ms: u64,
}

/// A full report: deterministic payload plus timing sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    /// Input-determined content; byte-identical across reruns.
    pub payload: Payload,
    /// Timing; excluded from determinism comparisons.
    pub meta: Meta,
}

impl Report {
    /// Assemble a report.
    pub fn new(
        command: &str,
        config: serde_json::Value,
        results: serde_json::Value,
        pass: bool,
        wall_clock_ms: u64,
    ) -> Self {
        Report {
            payload: Payload {
                schema_version: SCHEMA_VERSION,
                command: command.to_string(),
                config,
                results,
                pass,
            },
            meta: Meta { wall_clock_ms },
        }
    }

    /// Render the full report as pretty JSON with a trailing newline.
    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Render only the deterministic payload, for byte comparisons.
    pub fn payload_string(&self) -> String {
        serde_json::to_string_pretty(&self.payload).expect("payload serializes")
    }
}

/// One CSV cell: an exact count or a measured value.
#[derive(Clone, Copy, Debug)]
pub enum CsvCell {
    /// Integer cell, printed as-is.
    Count(usize),
    /// Float cell, printed with 17 significant digits.
    Value(f64),
}

/// Render a headered CSV table.
///
/// Every row must match the header width, and every [`CsvCell::Value`]
/// must be finite; a non-finite entry aborts the emission with a numeric
/// failure rather than writing a poisoned table. An empty row list yields
/// a header-only file.
pub fn emit_csv(header: &[&str], rows: &[Vec<CsvCell>]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::LengthMismatch {
                expected: header.len(),
                got: row.len(),
            });
        }
        let mut cells = Vec::with_capacity(row.len());
        for cell in row {
            match cell {
                CsvCell::Count(c) => cells.push(c.to_string()),
                CsvCell::Value(v) => {
                    if !v.is_finite() {
                        return Err(Error::NumericFailure(format!(
                            "csv row {i}: non-finite value"
                        )));
                    }
                    cells.push(format!("{v:.16e}"));
                }
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Write rendered output to a path, or to standard output when the path is
/// `-`.
pub fn write_output(out: &str, content: &str) -> Result<()> {
    if out == "-" {
        print!("{content}");
        Ok(())
    } else {
        std::fs::write(out, content).map_err(|source| Error::Io {
            path: out.to_string(),
            source,
        })
    }
}
