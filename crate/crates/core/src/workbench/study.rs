//! Mesh-refinement studies and the efficiency metric.

use serde::Serialize;

use crate::eigensolver::{solve, Method, SolverConfig};
use crate::error::{Error, Result};
use crate::workbench::problem::{check_refinements, ProblemFile};

/// Observed order `log2(e_N / e_2N)` from errors on a mesh and its
/// refinement; `None` when either error is zero (or not finite).
pub fn estimate_order(e_n: f64, e_2n: f64) -> Option<f64> {
    let (a, b) = (e_n.abs(), e_2n.abs());
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Some((a / b).log2())
    } else {
        None
    }
}

/// Figure of merit `1 / (|k - k_ref| T P)`; infinite when `k == k_ref`.
pub fn figure_of_merit(k: f64, k_ref: f64, time_s: f64, procs: usize) -> Result<f64> {
    if !(time_s > 0.0 && time_s.is_finite()) {
        return Err(Error::InvalidInput(vec![format!("time must be positive, got {time_s}")]));
    }
    if procs == 0 {
        return Err(Error::InvalidInput(vec!["procs must be at least 1".into()]));
    }
    if !k.is_finite() || !k_ref.is_finite() {
        return Err(Error::InvalidInput(vec!["k and k_ref must be finite".into()]));
    }
    let dk = (k - k_ref).abs();
    if dk == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (dk * time_s * procs as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub cells: usize,
    pub k_eff: f64,
    /// `|k - k_ref|` against the accelerated reference.
    pub e: f64,
    /// `|k - k_ref|` against the unaccelerated transport reference.
    pub e_do: Option<f64>,
    pub order: Option<f64>,
    pub order_do: Option<f64>,
    pub outers: usize,
    pub sweeps: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRun {
    pub cells: usize,
    pub method: Method,
    pub k_eff: f64,
    pub outers: usize,
    pub sweeps: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    /// Ascending cell counts; orders are defined from the second row on.
    pub rows: Vec<StudyRow>,
    pub reference: Option<ReferenceRun>,
    pub transport_reference: Option<ReferenceRun>,
    /// False when a sub-run failed; `failure` says which.
    pub complete: bool,
    pub failure: Option<String>,
}

impl StudyResult {
    fn aborted(
        rows: Vec<StudyRow>,
        reference: Option<ReferenceRun>,
        transport: Option<ReferenceRun>,
        why: String,
    ) -> Self {
        Self { rows, reference, transport_reference: transport, complete: false, failure: Some(why) }
    }
}

/// Runs the reference meshes first (accelerated, then unaccelerated when
/// `transport_reference` is set) and then the method of `config` on every
/// refinement. Cells are spread over the regions in the proportions of the
/// problem file. A non-converged or failed sub-run stops the study and is
/// reported through `complete`/`failure` together with the rows finished so
/// far; invalid inputs are returned as errors.
pub fn run_refinement_study(
    file: &ProblemFile,
    config: &SolverConfig,
    refinements: &[usize],
    reference: usize,
    transport_reference: bool,
) -> Result<StudyResult> {
    let errors = check_refinements(refinements, reference);
    if !errors.is_empty() {
        return Err(Error::InvalidInput(errors));
    }
    let run = |cells: usize, method: Method| -> Result<std::result::Result<ReferenceRun, String>> {
        let problem = file.with_total_cells(cells)?.build()?;
        let cfg = SolverConfig { method, ..config.clone() };
        Ok(match solve(&problem, &cfg) {
            Ok(s) => Ok(ReferenceRun {
                cells,
                method,
                k_eff: s.k_eff,
                outers: s.outers,
                sweeps: s.sweeps,
                wall_time_s: s.wall_time_s,
            }),
            Err(Error::NotConverged(s)) => {
                Err(format!("{} on {cells} cells did not converge in {} outers", method.label(), s.outers))
            }
            Err(e) => Err(format!("{} on {cells} cells failed: {e}", method.label())),
        })
    };

    let reference_run = match run(reference, config.method)? {
        Ok(r) => r,
        Err(why) => return Ok(StudyResult::aborted(Vec::new(), None, None, why)),
    };
    let transport_run = if transport_reference {
        match run(reference, Method::Pi)? {
            Ok(r) => Some(r),
            Err(why) => return Ok(StudyResult::aborted(Vec::new(), Some(reference_run), None, why)),
        }
    } else {
        None
    };

    let mut rows: Vec<StudyRow> = Vec::with_capacity(refinements.len());
    for &cells in refinements {
        let r = match run(cells, config.method)? {
            Ok(r) => r,
            Err(why) => return Ok(StudyResult::aborted(rows, Some(reference_run), transport_run, why)),
        };
        let e = (r.k_eff - reference_run.k_eff).abs();
        let e_do = transport_run.as_ref().map(|t| (r.k_eff - t.k_eff).abs());
        let prev = rows.last();
        rows.push(StudyRow {
            cells,
            k_eff: r.k_eff,
            e,
            e_do,
            order: prev.and_then(|p| estimate_order(p.e, e)),
            order_do: prev.and_then(|p| estimate_order(p.e_do?, e_do?)),
            outers: r.outers,
            sweeps: r.sweeps,
            wall_time_s: r.wall_time_s,
        });
    }
    Ok(StudyResult {
        rows,
        reference: Some(reference_run),
        transport_reference: transport_run,
        complete: true,
        failure: None,
    })
}
