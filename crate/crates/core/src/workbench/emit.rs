//! Result files: a JSON run record, CSV tables and a plot-ready flux CSV.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::eigensolver::{EigenSolution, Method};
use crate::error::{Error, Result};
use crate::workbench::problem::ProblemFile;
use crate::workbench::study::StudyResult;

/// Machine-readable record of one solve, echoing the problem definition.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord<'a> {
    pub problem: &'a ProblemFile,
    pub cells: usize,
    pub method: Method,
    pub k_eff: f64,
    pub converged: bool,
    pub outers: usize,
    pub sweeps: usize,
    pub low_order_iterations: usize,
    pub wall_time_s: f64,
    pub history: &'a [f64],
}

impl<'a> RunRecord<'a> {
    pub fn new(problem: &'a ProblemFile, solution: &'a EigenSolution) -> Self {
        Self {
            problem,
            cells: solution.vertices.len().saturating_sub(1),
            method: solution.method,
            k_eff: solution.k_eff,
            converged: solution.converged,
            outers: solution.outers,
            sweeps: solution.sweeps,
            low_order_iterations: solution.low_order_iterations,
            wall_time_s: solution.wall_time_s,
            history: &solution.history,
        }
    }
}

/// `v` with `digits` significant digits in positional notation.
pub fn significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Eigenvalue as printed in summaries: 6 decimals.
pub fn format_k(k: f64) -> String {
    format!("{k:.6}")
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
    }
    File::create(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.display().to_string(), source }
}

pub fn write_run_record(path: &Path, record: &RunRecord) -> Result<()> {
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(record)
        .map_err(|source| Error::Json { path: path.display().to_string(), source })?;
    writeln!(f, "{text}").map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// One line per solve: `cells,method,k_eff,outers,sweeps`.
pub fn write_summary_csv(path: &Path, runs: &[&EigenSolution]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["cells", "method", "k_eff", "outers", "sweeps"]).map_err(&err)?;
    for s in runs {
        w.write_record([
            s.vertices.len().saturating_sub(1).to_string(),
            s.method.label().to_string(),
            significant(s.k_eff, 8),
            s.outers.to_string(),
            s.sweeps.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Refinement table: `cells,k_eff,e,e_DO,order,order_DO`; undefined entries
/// are left empty.
pub fn write_study_csv(path: &Path, study: &StudyResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["cells", "k_eff", "e", "e_DO", "order", "order_DO"]).map_err(&err)?;
    let sci = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_default();
    let ord = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
    for r in &study.rows {
        w.write_record([
            r.cells.to_string(),
            significant(r.k_eff, 8),
            sci(Some(r.e)),
            sci(r.e_do),
            ord(r.order),
            ord(r.order_do),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Continuous scalar flux per vertex: `x,group,phi` (groups numbered from 1).
pub fn write_flux_csv(path: &Path, solution: &EigenSolution) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["x", "group", "phi"]).map_err(&err)?;
    for (g, values) in solution.flux.values.iter().enumerate() {
        for (x, v) in solution.vertices.iter().zip(values) {
            w.write_record([format!("{x}"), (g + 1).to_string(), format!("{v:e}")]).map_err(&err)?;
        }
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn write_study_record(path: &Path, study: &StudyResult) -> Result<()> {
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(study)
        .map_err(|source| Error::Json { path: path.display().to_string(), source })?;
    writeln!(f, "{text}").map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Files written by [`emit_solution`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emitted {
    pub record: PathBuf,
    pub summary: PathBuf,
    pub flux: Option<PathBuf>,
}

/// Writes `run.json`, `summary.csv` and optionally `flux.csv` into `dir`.
pub fn emit_solution(dir: &Path, problem: &ProblemFile, solution: &EigenSolution, flux: bool) -> Result<Emitted> {
    let out = Emitted {
        record: dir.join("run.json"),
        summary: dir.join("summary.csv"),
        flux: flux.then(|| dir.join("flux.csv")),
    };
    write_run_record(&out.record, &RunRecord::new(problem, solution))?;
    write_summary_csv(&out.summary, &[solution])?;
    if let Some(p) = &out.flux {
        write_flux_csv(p, solution)?;
    }
    Ok(out)
}

/// Writes `study.csv` and `study.json` into `dir`.
pub fn emit_study(dir: &Path, study: &StudyResult) -> Result<(PathBuf, PathBuf)> {
    let (csv, json) = (dir.join("study.csv"), dir.join("study.json"));
    write_study_csv(&csv, study)?;
    write_study_record(&json, study)?;
    Ok((csv, json))
}
