//! Report files written from an [`EvalReport`].
//!
//! * `table.csv`: one row per (family, size, source).
//! * `report.json`: the full report, pretty-printed.
//! * `series.csv`: `family,source,metric,x,y,err` plot triples.
//!
//! Output depends only on the report, so re-emitting is byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::eval::{EvalReport, MetricRow};

pub const TABLE_FILE: &str = "table.csv";
pub const JSON_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series.csv";

pub const TABLE_HEADER: &str = "family,node_count,source,instances,constraints_mean,constraints_stderr,\
path_accuracy,relative_distance_mean,relative_distance_stderr,iterations_astar_mean,iterations_astar_stderr,\
iterations_dijkstra_mean,time_heuristic_s,time_astar_s,time_dijkstra_s,speedup";

pub const SERIES_HEADER: &str = "family,source,metric,x,y,err";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    /// Table, JSON and series.
    #[default]
    All,
    Csv,
    Json,
}

fn table_row(out: &mut String, r: &MetricRow) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.family,
        r.node_count,
        r.source.name(),
        r.instances,
        r.constraints.mean,
        r.constraints.stderr,
        r.path_accuracy,
        r.relative_distance.mean,
        r.relative_distance.stderr,
        r.iterations_astar.mean,
        r.iterations_astar.stderr,
        r.iterations_dijkstra,
        r.time_heuristic,
        r.time_astar,
        r.time_dijkstra,
        r.speedup,
    );
}

pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for row in &report.rows {
        table_row(&mut out, row);
    }
    out
}

/// Path accuracy, relative distance and A* iterations per source, plus
/// Dijkstra iterations once per family (taken from the first source seen).
pub fn render_series(report: &EvalReport) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    let mut rows: Vec<&MetricRow> = report.rows.iter().collect();
    rows.sort_by(|a, b| {
        (a.family, a.source, a.node_count).cmp(&(b.family, b.source, b.node_count))
    });
    let mut line =
        |family: &dyn std::fmt::Display, source: &str, metric: &str, x: usize, y: f64, err: f64| {
            let _ = writeln!(out, "{family},{source},{metric},{x},{y},{err}");
        };
    for r in &rows {
        let s = r.source.name();
        line(
            &r.family,
            s,
            "path_accuracy",
            r.node_count,
            r.path_accuracy,
            0.0,
        );
        line(
            &r.family,
            s,
            "relative_distance",
            r.node_count,
            r.relative_distance.mean,
            r.relative_distance.stderr,
        );
        line(
            &r.family,
            s,
            "iterations",
            r.node_count,
            r.iterations_astar.mean,
            r.iterations_astar.stderr,
        );
    }
    let mut seen = Vec::new();
    for r in &rows {
        if !seen.contains(&(r.family, r.node_count)) {
            seen.push((r.family, r.node_count));
            line(
                &r.family,
                "dijkstra",
                "iterations",
                r.node_count,
                r.iterations_dijkstra,
                0.0,
            );
        }
    }
    out
}

fn write(path: PathBuf, contents: &[u8]) -> Result<PathBuf, ReportError> {
    std::fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Write the report files into `dir` (created if missing).
pub fn emit_report(
    report: &EvalReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut written = Vec::new();
    if matches!(format, ReportFormat::All | ReportFormat::Csv) {
        written.push(write(
            dir.join(TABLE_FILE),
            render_table(report).as_bytes(),
        )?);
        written.push(write(
            dir.join(SERIES_FILE),
            render_series(report).as_bytes(),
        )?);
    }
    if matches!(format, ReportFormat::All | ReportFormat::Json) {
        let path = dir.join(JSON_FILE);
        let mut json = serde_json::to_vec_pretty(report).map_err(|source| ReportError::Json {
            path: path.clone(),
            source,
        })?;
        json.push(b'\n');
        written.push(write(path, &json)?);
    }
    Ok(written)
}

/// Read a report previously written as `report.json`.
pub fn load_report(path: &Path) -> Result<EvalReport, ReportError> {
    let bytes = std::fs::read(path).map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| ReportError::Json {
        path: path.to_owned(),
        source,
    })
}
