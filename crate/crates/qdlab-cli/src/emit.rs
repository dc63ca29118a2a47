//! Report emission: CSV with unit-annotated headers and JSON, both with
//! floating-point values written to 17 significant digits so parsing them
//! back reproduces the exact binary values.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Which file formats an analysis writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formats {
    Csv,
    Json,
    Both,
}

impl Formats {
    pub fn csv(self) -> bool {
        matches!(self, Formats::Csv | Formats::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Formats::Json | Formats::Both)
    }

    pub fn from_names(names: &[String]) -> Result<Formats, CliError> {
        let csv = names.iter().any(|f| f == "csv");
        let json = names.iter().any(|f| f == "json");
        match (csv, json) {
            (true, true) => Ok(Formats::Both),
            (true, false) => Ok(Formats::Csv),
            (false, true) => Ok(Formats::Json),
            (false, false) => Err(CliError::Config(
                "output formats must include \"csv\" or \"json\"".to_string(),
            )),
        }
    }
}

/// 17 significant digits: enough to reconstruct any f64 exactly.
pub fn float_cell(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn opt_float_cell(x: Option<f64>) -> String {
    x.map(float_cell).unwrap_or_default()
}

/* RFC-4180 quoting for free-text cells. */
fn escape_cell(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// Write a CSV file: one header row, then the data rows. An empty row set
/// produces a header-only file.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let escaped: Vec<String> = row.iter().map(|c| escape_cell(c)).collect();
        out.push_str(&escaped.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/* serde_json formatter that renders every finite float with 17 significant
 * digits; non-finite values fall to serde_json's default null before this
 * hook is reached. */
struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:e}")
    }
}

/// Serialize to JSON with exact-round-trip floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
    value
        .serialize(&mut serializer)
        .map_err(|e| CliError::Analysis(format!("serialization failed: {e}")))?;
    String::from_utf8(buf).map_err(|e| CliError::Analysis(format!("non-UTF8 output: {e}")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Tracks every file an analysis writes, for the manifest.
#[derive(Debug, Default)]
pub struct OutputLog {
    files: Vec<PathBuf>,
}

impl OutputLog {
    pub fn record(&mut self, path: PathBuf) {
        println!("wrote {}", path.display());
        self.files.push(path);
    }

    pub fn file_names(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string())
            })
            .collect()
    }
}
