//! Report envelopes, CSV tables, failures and atomic file writes.

use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

pub const TOOL: &str = "calmeasure";

/// Why a command failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or input values (exit 1).
    Validation(String),
    /// Files could not be read or written (exit 2).
    Io(String),
}

impl Failure {
    pub fn validation(msg: impl Display) -> Self {
        Failure::Validation(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Validation(_) => "validation",
            Failure::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Io(m) => m,
        }
    }
}

impl From<calmeasure::Error> for Failure {
    fn from(err: calmeasure::Error) -> Self {
        if err.is_io() {
            Failure::Io(err.to_string())
        } else {
            Failure::Validation(err.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(err: io::Error) -> Self {
        Failure::Io(err.to_string())
    }
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub flags: Value,
    pub seed: u64,
}

#[derive(Serialize)]
pub struct Envelope<'a> {
    pub meta: &'a Meta,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<&'a Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody<'a>>,
}

#[derive(Serialize)]
pub struct ErrorBody<'a> {
    pub kind: &'static str,
    pub message: &'a str,
}

/// Rows for `--emit-csv`.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Shortest round-trip text for a float, as used in every CSV cell.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so a failed command never leaves a partial file behind.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| Failure::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

pub fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("report types serialize to JSON")
}
