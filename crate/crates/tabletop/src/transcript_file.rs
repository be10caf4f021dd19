//! JSON Lines transcript files: one header line, one line per step, one
//! footer line.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tabletop_core::session::{StepRecord, Transcript, TranscriptFooter, TranscriptHeader, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum TranscriptFileError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unsupported transcript schema version {found:?} (this build reads {SCHEMA_VERSION:?})")]
    Version { found: String },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(TranscriptHeader),
    Step(StepRecord),
    Footer(TranscriptFooter),
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("transcript values serialize")
}

pub fn to_jsonl(t: &Transcript) -> String {
    let mut out = String::new();
    out.push_str(&to_line(&Line::Header(t.header.clone())));
    out.push('\n');
    for s in &t.steps {
        out.push_str(&to_line(&Line::Step(s.clone())));
        out.push('\n');
    }
    out.push_str(&to_line(&Line::Footer(t.footer.clone())));
    out.push('\n');
    out
}

pub fn write_transcript(path: &Path, t: &Transcript) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    f.write_all(to_jsonl(t).as_bytes())?;
    f.flush()
}

fn format_err(line: usize, message: impl Into<String>) -> TranscriptFileError {
    TranscriptFileError::Format {
        line,
        message: message.into(),
    }
}

fn check_version(first: &str) -> Result<(), TranscriptFileError> {
    let v: Value = serde_json::from_str(first).map_err(|e| format_err(1, e.to_string()))?;
    match v.get("schema_version") {
        Some(Value::String(s)) if s == SCHEMA_VERSION => Ok(()),
        Some(Value::String(s)) => Err(TranscriptFileError::Version { found: s.clone() }),
        _ => Err(format_err(1, "header has no schema_version")),
    }
}

pub fn parse_transcript<R: BufRead>(reader: R) -> Result<Transcript, TranscriptFileError> {
    let mut header = None;
    let mut steps = Vec::new();
    let mut footer = None;
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            check_version(&line)?;
        }
        if footer.is_some() {
            return Err(format_err(n, "content after footer"));
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| format_err(n, e.to_string()))?;
        match (parsed, header.is_some()) {
            (Line::Header(h), false) => header = Some(h),
            (_, false) => return Err(format_err(n, "first line must be the header")),
            (Line::Header(_), true) => return Err(format_err(n, "duplicate header")),
            (Line::Step(s), true) => steps.push(s),
            (Line::Footer(f), true) => footer = Some(f),
        }
    }
    let header = header.ok_or_else(|| format_err(0, "empty transcript"))?;
    let footer = footer.ok_or_else(|| format_err(0, "missing footer"))?;
    Ok(Transcript { header, steps, footer })
}

pub fn read_transcript(path: &Path) -> Result<Transcript, TranscriptFileError> {
    parse_transcript(BufReader::new(fs::File::open(path)?))
}
