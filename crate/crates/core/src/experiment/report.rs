//! Consolidated tables over a directory of runs.
//!
//! Four tables mirror the comparison tables of the study: deterministic PDE
//! accuracy, stochastic PDE moments, beam UQ and the equation-of-state
//! split study. Markdown tables include wall time; CSV tables leave it out
//! so they are reproducible byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::pipeline::RunSummary;
use crate::error::{Error, Result};

pub const TABLES: [&str; 4] = ["deterministic", "stochastic", "beam", "eos"];

fn columns(table: &str) -> &'static [&'static str] {
    match table {
        "deterministic" => &["run", "model", "p", "basis", "evaluations", "mse", "L_PDE"],
        "stochastic" => &["run", "model", "p", "basis", "evaluations", "mae_mean", "mae_std"],
        "beam" => &["run", "model", "p", "basis", "evaluations", "mean", "std", "ref_mean", "ref_std", "ks"],
        _ => &[
            "run",
            "p",
            "pc2_violating_splits",
            "baseline_violating_splits",
            "pc2_median_err_P",
            "baseline_median_err_P",
            "pc2_median_err_E",
            "baseline_median_err_E",
        ],
    }
}

fn table_of(s: &RunSummary) -> Option<&'static str> {
    match (s.problem.as_str(), s.command.as_str()) {
        (_, "reference") => None,
        ("eos", _) => Some("eos"),
        ("beam", "uq") => Some("beam"),
        ("beam", _) => None,
        (_, "uq") if s.stochastic => Some("stochastic"),
        (_, "train" | "sparse") if !s.stochastic => Some("deterministic"),
        _ => None,
    }
}

fn model_label(s: &RunSummary) -> &'static str {
    let sparse = s.command == "sparse" || s.notes.get("model_source").is_some_and(|m| m == "sparse");
    if sparse {
        "sparse PC2"
    } else {
        "PC2"
    }
}

fn fmt(v: Option<&f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4e}"))
}

fn row(table: &str, s: &RunSummary) -> Vec<String> {
    let m = |k: &str| fmt(s.metrics.get(k));
    let head = vec![s.name.clone(), model_label(s).into(), s.p.to_string(), s.basis_size.to_string(), s.model_evaluations.to_string()];
    match table {
        "deterministic" => [head, vec![m("mse"), m("L_PDE")]].concat(),
        "stochastic" => [head, vec![m("mae_mean"), m("mae_std")]].concat(),
        "beam" => [head, vec![m("probe0_mean"), m("probe0_std"), m("probe0_ref_mean"), m("probe0_ref_std"), m("probe0_ks")]].concat(),
        _ => vec![
            s.name.clone(),
            s.p.to_string(),
            m("pc2_violating_splits"),
            m("baseline_violating_splits"),
            m("pc2_median_err_P"),
            m("baseline_median_err_P"),
            m("pc2_median_err_E"),
            m("baseline_median_err_E"),
        ],
    }
}

/// Summaries in `dir` itself or in its immediate subdirectories, sorted by
/// directory name.
pub fn collect_runs(dir: &Path) -> Result<Vec<(PathBuf, RunSummary)>> {
    let read = |p: &Path| -> Result<Option<RunSummary>> {
        let f = p.join("summary.json");
        if !f.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&f)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Schema(format!("{}: {e}", f.display())))
    };
    if !dir.is_dir() {
        return Err(Error::InvalidInput(format!("{} is not a directory", dir.display())));
    }
    if let Some(s) = read(dir)? {
        return Ok(vec![(dir.to_path_buf(), s)]);
    }
    let mut subdirs: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    let mut out = Vec::new();
    for d in subdirs {
        if let Some(s) = read(&d)? {
            out.push((d, s));
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no runs found in {}", dir.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// `(table name, markdown, csv)` for every table, in [`TABLES`] order.
    pub tables: Vec<(String, String, String)>,
    pub rows: usize,
}

pub fn build_report(runs: &[(PathBuf, RunSummary)]) -> Report {
    let mut tables = Vec::new();
    let mut rows = 0;
    for table in TABLES {
        let cols = columns(table);
        let mut md = format!("| {} | time (s) |\n|{}---|\n", cols.join(" | "), "---|".repeat(cols.len()));
        let mut csv = cols.join(",") + "\n";
        for (_, s) in runs.iter().filter(|(_, s)| table_of(s) == Some(table)) {
            let r = row(table, s);
            let _ = writeln!(md, "| {} | {:.1} |", r.join(" | "), s.wall_time_s);
            let _ = writeln!(csv, "{}", r.join(","));
            rows += 1;
        }
        tables.push((table.to_string(), md, csv));
    }
    Report { tables, rows }
}

/// Writes `table_<name>.md`, `table_<name>.csv` and `report.md` into `out`.
pub fn write_report(report: &Report, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut all = String::from("# Results\n");
    for (name, md, csv) in &report.tables {
        let _ = write!(all, "\n## {name}\n\n{md}");
        for (ext, body) in [("md", md), ("csv", csv)] {
            let p = out.join(format!("table_{name}.{ext}"));
            std::fs::write(&p, body)?;
            written.push(p);
        }
    }
    let p = out.join("report.md");
    std::fs::write(&p, all)?;
    written.push(p);
    Ok(written)
}
