//! CSV and JSON renderings of summaries and comparisons.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tabletop_core::metrics::{Comparison, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
#[error("unknown export format {0:?} (expected csv or json)")]
pub struct UnknownFormat(pub String);

impl FromStr for ExportFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(UnknownFormat(s.to_string())),
        }
    }
}

fn render(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

fn heights_header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |h| format!("{prefix}{h}"))
}

/// Per step: mean height, mean running maximum, then the count of sessions
/// at each height.
pub fn summary_csv(s: &Summary) -> String {
    let mut rows = vec![["step", "mean", "running_max_mean"]
        .into_iter()
        .map(String::from)
        .chain(heights_header("h", s.object_count))
        .collect()];
    for step in 0..=s.steps {
        let mut row = vec![step.to_string(), s.mean[step].to_string(), s.running_max_mean[step].to_string()];
        row.extend(s.histogram[step].iter().map(usize::to_string));
        rows.push(row);
    }
    render(rows)
}

/// One row per session, one column per step.
pub fn matrix_csv(s: &Summary) -> String {
    let mut rows = vec![std::iter::once("session".to_string())
        .chain((0..=s.steps).map(|j| format!("step{j}")))
        .collect()];
    for (i, r) in s.matrix.rows.iter().enumerate() {
        rows.push(std::iter::once(i.to_string()).chain(r.iter().map(usize::to_string)).collect());
    }
    render(rows)
}

/// Per session: maximum height and the first step reaching each height
/// (empty when never reached).
pub fn sessions_csv(s: &Summary) -> String {
    let mut rows = vec![["session", "max_height"]
        .into_iter()
        .map(String::from)
        .chain(heights_header("first_passage_h", s.object_count))
        .collect()];
    for (i, (max, passage)) in s.session_max.iter().zip(&s.first_passage).enumerate() {
        let mut row = vec![i.to_string(), max.to_string()];
        row.extend(passage.iter().map(|p| p.map(|v| v.to_string()).unwrap_or_default()));
        rows.push(row);
    }
    render(rows)
}

/// Per-step mean differences with intervals, then a `reach` row.
pub fn comparison_csv(c: &Comparison) -> String {
    let mut rows = vec![["row", "a", "b", "diff", "ci_lo", "ci_hi"].map(String::from).to_vec()];
    for (j, (d, ci)) in c.mean_diff.iter().zip(&c.mean_diff_ci).enumerate() {
        rows.push(vec![
            format!("mean_step{j}"),
            String::new(),
            String::new(),
            d.to_string(),
            ci.lo.to_string(),
            ci.hi.to_string(),
        ]);
    }
    rows.push(vec![
        "reach".into(),
        c.reach_a.to_string(),
        c.reach_b.to_string(),
        c.reach_diff.to_string(),
        c.reach_diff_ci.lo.to_string(),
        c.reach_diff_ci.hi.to_string(),
    ]);
    render(rows)
}

fn write(dir: &Path, name: &str, text: &str) -> io::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

/// Writes the summary files into `dir` and returns their paths.
pub fn write_summary(dir: &Path, s: &Summary, format: ExportFormat) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        ExportFormat::Csv => Ok(vec![
            write(dir, "summary.csv", &summary_csv(s))?,
            write(dir, "matrix.csv", &matrix_csv(s))?,
            write(dir, "sessions.csv", &sessions_csv(s))?,
        ]),
        ExportFormat::Json => {
            let text = serde_json::to_string_pretty(s).expect("summary serializes") + "\n";
            Ok(vec![write(dir, "summary.json", &text)?])
        }
    }
}

pub fn write_comparison(dir: &Path, c: &Comparison, format: ExportFormat) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    match format {
        ExportFormat::Csv => write(dir, "comparison.csv", &comparison_csv(c)),
        ExportFormat::Json => {
            let text = serde_json::to_string_pretty(c).expect("comparison serializes") + "\n";
            write(dir, "comparison.json", &text)
        }
    }
}
