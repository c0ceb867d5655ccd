//! JSON problem files.
//!
//! A problem file names its materials, lays out regions by material name,
//! and carries the solver settings. Every default lives here; CLI flags only
//! override. Parsing never stops at the first problem: syntax errors carry a
//! line and column, semantic errors carry the offending field path, and all
//! of them are returned together as [`Error::InvalidInput`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eigensolver::{Method, SolverConfig};
use crate::error::{Error, Result};
use crate::loworder::{LinearSolver, LowOrderOptions};
use crate::materials::CrossSectionSet;
use crate::mesh::{BoundaryCondition, Region, SlabMesh};
use crate::problem::Problem;
use crate::quadrature::AngularQuadrature;
use crate::transport::SpatialScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    /// Free text carried into run records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub materials: Vec<CrossSectionSet>,
    pub regions: Vec<RegionSpec>,
    pub boundary: BoundarySpec,
    pub sn_order: usize,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub scheme: SpatialScheme,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub run_mode: RunMode,
    /// Eigenvalue used for error reporting, e.g. a known benchmark value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_k: Option<f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    /// Thickness in cm.
    pub width: f64,
    /// Name of an entry of `materials`.
    pub material: String,
    pub cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub epsilon_k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_phi: Option<f64>,
    pub max_outers: usize,
    pub pi_inner_tol: f64,
    pub pi_max_inner: usize,
    /// Low-order eigenvalue tolerance; follows `epsilon_k` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low_order_epsilon: Option<f64>,
    pub low_order_max_outers: usize,
    pub low_order_max_inner: usize,
    /// Relative residual for conjugate-gradient group solves; when absent the
    /// tridiagonal systems are factored directly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_tolerance: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            epsilon_k: c.epsilon_k,
            epsilon_phi: c.epsilon_phi,
            max_outers: c.max_outers,
            pi_inner_tol: c.pi_inner_tol,
            pi_max_inner: c.pi_max_inner,
            low_order_epsilon: None,
            low_order_max_outers: c.low_order.max_outers,
            low_order_max_inner: c.low_order.max_inner,
            cg_tolerance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum RunMode {
    #[default]
    Single,
    /// Total cell counts of the refinement sequence (each double the last)
    /// and of the reference mesh.
    RefineStudy { refinements: Vec<usize>, reference: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub flux_csv: bool,
}

fn default_method() -> Method {
    Method::Smm
}

fn default_workers() -> usize {
    1
}

impl ProblemFile {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Parses and validates; all problems found are reported at once.
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| {
            Error::InvalidInput(vec![format!("line {}, column {}: {}", e.line(), e.column(), strip_position(&e))])
        })?;
        let errors = file.validate();
        if errors.is_empty() {
            Ok(file)
        } else {
            Err(Error::InvalidInput(errors))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    /// Field-anchored list of everything wrong with the definition.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.materials.is_empty() {
            errors.push("materials: at least one material is required".to_string());
        }
        let groups = self.materials.first().map(|m| m.num_groups());
        for (i, m) in self.materials.iter().enumerate() {
            for v in m.validate() {
                errors.push(format!("materials[{i}] ({}): {v}", m.name));
            }
            if Some(m.num_groups()) != groups {
                errors.push(format!(
                    "materials[{i}] ({}): {} groups, but materials[0] has {}",
                    m.name,
                    m.num_groups(),
                    groups.unwrap_or(0)
                ));
            }
            if self.materials[..i].iter().any(|o| o.name == m.name) {
                errors.push(format!("materials[{i}].name: duplicate material name '{}'", m.name));
            }
        }
        if self.regions.is_empty() {
            errors.push("regions: at least one region is required".to_string());
        }
        for (i, r) in self.regions.iter().enumerate() {
            if !(r.width > 0.0 && r.width.is_finite()) {
                errors.push(format!("regions[{i}].width: must be positive and finite, got {}", r.width));
            }
            if r.cells == 0 {
                errors.push(format!("regions[{i}].cells: must be at least 1"));
            }
            if !self.materials.iter().any(|m| m.name == r.material) {
                errors.push(format!("regions[{i}].material: unknown material '{}'", r.material));
            }
        }
        if !self.regions.is_empty()
            && !self.regions.iter().any(|r| self.materials.iter().any(|m| m.name == r.material && m.is_fissile()))
        {
            errors.push("regions: no region contains a fissile material".to_string());
        }
        if AngularQuadrature::gauss_legendre(self.sn_order).is_err() {
            errors.push(format!("sn_order: must be a positive even number, got {}", self.sn_order));
        }
        if self.workers == 0 {
            errors.push("workers: must be at least 1".to_string());
        }
        let t = &self.tolerances;
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errors.push(format!("tolerances.{name}: must be positive, got {v}"));
            }
        };
        positive("epsilon_k", t.epsilon_k);
        positive("pi_inner_tol", t.pi_inner_tol);
        if let Some(v) = t.epsilon_phi {
            positive("epsilon_phi", v);
        }
        if let Some(v) = t.low_order_epsilon {
            positive("low_order_epsilon", v);
        }
        if let Some(v) = t.cg_tolerance {
            positive("cg_tolerance", v);
        }
        for (name, v) in [
            ("max_outers", t.max_outers),
            ("pi_max_inner", t.pi_max_inner),
            ("low_order_max_outers", t.low_order_max_outers),
            ("low_order_max_inner", t.low_order_max_inner),
        ] {
            if v == 0 {
                errors.push(format!("tolerances.{name}: must be at least 1"));
            }
        }
        if let Some(k) = self.reference_k {
            if !(k > 0.0 && k.is_finite()) {
                errors.push(format!("reference_k: must be positive, got {k}"));
            }
        }
        if let RunMode::RefineStudy { refinements, reference } = &self.run_mode {
            errors.extend(check_refinements(refinements, *reference).into_iter().map(|e| format!("run_mode.{e}")));
        }
        errors
    }

    pub fn total_cells(&self) -> usize {
        self.regions.iter().map(|r| r.cells).sum()
    }

    /// Multiplies every region's cell count by `factor`, rounding to the
    /// nearest integer (at least one cell per region).
    pub fn scale_cells(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidInput(vec![format!("cells-scale: must be positive, got {factor}")]));
        }
        let mut out = self.clone();
        for r in &mut out.regions {
            r.cells = ((r.cells as f64 * factor).round() as usize).max(1);
        }
        Ok(out)
    }

    /// Redistributes `total` cells over the regions in proportion to the
    /// file's own cell counts.
    pub fn with_total_cells(&self, total: usize) -> Result<Self> {
        let base = self.total_cells();
        let mut out = self.clone();
        let mut assigned = 0;
        let last = out.regions.len().saturating_sub(1);
        for (i, r) in out.regions.iter_mut().enumerate() {
            r.cells = if i == last { total - assigned.min(total) } else { r.cells * total / base.max(1) };
            assigned += r.cells;
        }
        if out.regions.iter().any(|r| r.cells == 0) || assigned != total {
            return Err(Error::InvalidInput(vec![format!(
                "{total} cells cannot be split over {} regions in the proportions of the problem file",
                self.regions.len()
            )]));
        }
        Ok(out)
    }

    pub fn with_sn_order(&self, sn_order: usize) -> Self {
        Self { sn_order, ..self.clone() }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let t = &self.tolerances;
        SolverConfig {
            method: self.method,
            epsilon_k: t.epsilon_k,
            epsilon_phi: t.epsilon_phi,
            max_outers: t.max_outers,
            pi_inner_tol: t.pi_inner_tol,
            pi_max_inner: t.pi_max_inner,
            low_order: LowOrderOptions {
                epsilon_lambda: t.low_order_epsilon.unwrap_or(t.epsilon_k),
                max_outers: t.low_order_max_outers,
                max_inner: t.low_order_max_inner,
                solver: match t.cg_tolerance {
                    Some(rel_tol) => LinearSolver::Cg { rel_tol },
                    None => LinearSolver::Direct,
                },
                ..LowOrderOptions::default()
            },
            scheme: self.scheme,
            workers: self.workers,
        }
    }

    /// Builds the validated domain problem.
    pub fn build(&self) -> Result<Problem> {
        let errors = self.validate();
        if !errors.is_empty() {
            return Err(Error::InvalidInput(errors));
        }
        let regions: Vec<Region> = self
            .regions
            .iter()
            .map(|r| Region {
                width: r.width,
                material: self.materials.iter().position(|m| m.name == r.material).expect("validated"),
                cells: r.cells,
            })
            .collect();
        let mesh = SlabMesh::build_uniform(&regions, self.materials.len(), self.boundary.left, self.boundary.right)?;
        Problem::new(self.materials.clone(), mesh, AngularQuadrature::gauss_legendre(self.sn_order)?)
    }
}

/// Checks a refinement sequence: non-empty, each entry double the previous,
/// reference finer than all of them.
pub fn check_refinements(refinements: &[usize], reference: usize) -> Vec<String> {
    let mut errors = Vec::new();
    if refinements.is_empty() {
        errors.push("refinements: at least one mesh is required".to_string());
    }
    if refinements.contains(&0) {
        errors.push("refinements: cell counts must be positive".to_string());
    }
    for w in refinements.windows(2) {
        if w[1] != 2 * w[0] {
            errors.push(format!("refinements: {} does not double {}", w[1], w[0]));
        }
    }
    if refinements.iter().any(|&n| n >= reference) {
        errors.push(format!("reference: {reference} cells must exceed every refinement"));
    }
    errors
}

fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    }
}
