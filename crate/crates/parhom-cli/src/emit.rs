//! Report emission: CSV with fixed documented headers and 17-significant-
//! digit numbers, and JSON with byte-stable key order.

use crate::CliError;
use parhom_core::moments::MomentRow;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// 17 significant digits, enough to reproduce any f64 exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A record type with a fixed CSV layout.
pub trait CsvRecord {
    fn header() -> &'static str;
    fn row(&self) -> Vec<String>;
}

impl CsvRecord for MomentRow {
    fn header() -> &'static str {
        "k,side,E,J,V,J_product,n,stderr_E,stderr_J"
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.side.clone(),
            fmt17(self.e),
            fmt17(self.j),
            fmt17(self.v),
            fmt17(self.j_product),
            self.n.to_string(),
            fmt17(self.stderr_e),
            fmt17(self.stderr_j),
        ]
    }
}

pub enum ReportFormat {
    Csv,
    Json,
}

/// Emits records as CSV (fixed header) or JSON; empty record lists error out.
pub fn emit_report<T: CsvRecord + Serialize>(
    records: &[T],
    format: ReportFormat,
) -> Result<Vec<u8>, CliError> {
    if records.is_empty() {
        return Err(CliError::Config("records: refusing to emit an empty report".into()));
    }
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(T::header());
            out.push('\n');
            for r in records {
                out.push_str(&r.row().join(","));
                out.push('\n');
            }
            Ok(out.into_bytes())
        }
        ReportFormat::Json => serde_json::to_vec_pretty(records)
            .map_err(|e| CliError::Config(format!("records: {e}"))),
    }
}

/// Round-trip reader for JSON reports.
pub fn parse_report<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>, CliError> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Config(format!("records: {e}")))
}

/// Builds a CSV string from a header and preformatted rows.
pub fn csv_table(header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_reproduces_f64() {
        for x in [0.1, -3.25e-7, std::f64::consts::PI, 1.0 / 3.0, 12345.678] {
            let parsed: f64 = fmt17(x).parse().unwrap();
            assert_eq!(parsed, x);
        }
    }

    #[test]
    fn moment_row_header_and_single_row() {
        let row = MomentRow {
            k: 2,
            side: "above".into(),
            e: 0.5,
            j: 0.3,
            v: 0.05,
            j_product: 0.09,
            n: 64,
            stderr_e: 0.01,
            stderr_j: 0.02,
        };
        let bytes = emit_report(&[row.clone()], ReportFormat::Csv).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,side,E,J,V,J_product,n,stderr_E,stderr_J");
        assert_eq!(lines.count(), 1);

        // JSON round-trip
        let bytes = emit_report(&[row.clone()], ReportFormat::Json).unwrap();
        let back: Vec<MomentRow> = parse_report(&bytes).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], row);

        let empty: Vec<MomentRow> = Vec::new();
        assert!(emit_report(&empty, ReportFormat::Csv).is_err());
    }
}
