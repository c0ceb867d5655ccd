//! Continuous linear finite-element diffusion eigenproblem with SMM
//! correction sources (the low-order moment system).
//!
//! Per group the weak form is
//!
//! ```text
//! int u' (1/3 sigma_t) phi' + int sigma_r u phi + f_b sum_vac u phi
//!   = int u Q0 - sum_vac u beta - int u' (1/sigma_t) dT/dx
//!     + sum_interior {u'/sigma_t} (T(left cell) - T(right cell))
//! ```
//!
//! with `Q0` holding in-scatter from other groups and fission. The face term
//! uses outward-normal traces: `T-` of the left cell minus `T+` of the right
//! cell at each interior vertex.

pub mod linalg;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryCondition, Side, SlabMesh};
use crate::problem::Problem;
use crate::transport::{NodalField, SmmClosures};

pub use linalg::{pcg, CgReport, LdlFactor, Tridiagonal};

/// Continuous nodal scalar flux per group, `values[g][vertex]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FemField {
    pub values: Vec<Vec<f64>>,
}

impl FemField {
    pub fn constant(groups: usize, vertices: usize, value: f64) -> Self {
        Self { values: vec![vec![value; vertices]; groups] }
    }

    pub fn num_groups(&self) -> usize {
        self.values.len()
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().flatten().for_each(|v| *v *= factor);
    }

    /// Projects a discontinuous multigroup field onto the vertex grid.
    pub fn project(phi: &[NodalField], mesh: &SlabMesh) -> Self {
        Self { values: phi.iter().map(|p| project_to_fem(p, mesh)).collect() }
    }

    pub fn inject(&self, mesh: &SlabMesh) -> Vec<NodalField> {
        self.values.iter().map(|v| inject_from_fem(v, mesh)).collect()
    }
}

/// Width-weighted average of the two traces at each shared vertex.
/// Boundary vertices copy their single trace.
pub fn project_to_fem(phi: &[[f64; 2]], mesh: &SlabMesh) -> Vec<f64> {
    let cells = mesh.num_cells();
    let mut out = Vec::with_capacity(cells + 1);
    out.push(phi[0][0]);
    for v in 1..cells {
        let (hl, hr) = (mesh.width(v - 1), mesh.width(v));
        out.push((hl * phi[v - 1][1] + hr * phi[v][0]) / (hl + hr));
    }
    out.push(phi[cells - 1][1]);
    out
}

pub fn inject_from_fem(values: &[f64], mesh: &SlabMesh) -> NodalField {
    (0..mesh.num_cells()).map(|c| [values[c], values[c + 1]]).collect()
}

/// Adds `coeff * int b_i f` over `cell` for a linear `f` with nodal values `(fl, fr)`.
#[inline]
fn add_cell_mass(y: &mut [f64], cell: usize, h: f64, coeff: f64, fl: f64, fr: f64) {
    let s = coeff * h / 6.0;
    y[cell] += s * (2.0 * fl + fr);
    y[cell + 1] += s * (fl + 2.0 * fr);
}

/// Per-group left-hand side: stiffness `1/(3 sigma_t)`, consistent removal
/// mass, and `f_b` on vacuum boundary vertices.
pub fn assemble_lhs(problem: &Problem, f_b: f64) -> Vec<Tridiagonal> {
    let mesh = &problem.mesh;
    let n = mesh.num_vertices();
    (0..problem.num_groups())
        .map(|g| {
            let mut a = Tridiagonal::zeros(n);
            for c in 0..mesh.num_cells() {
                let xs = problem.xs(c);
                let h = mesh.width(c);
                let d = 1.0 / (3.0 * xs.sigma_t[g] * h);
                let sr = (xs.sigma_t[g] - xs.sigma_s[g][g]) * h;
                a.add_element(c, [[d + sr / 3.0, -d + sr / 6.0], [-d + sr / 6.0, d + sr / 3.0]]);
            }
            if mesh.left_bc == BoundaryCondition::Vacuum {
                a.diag[0] += f_b;
            }
            if mesh.right_bc == BoundaryCondition::Vacuum {
                a.diag[n - 1] += f_b;
            }
            a
        })
        .collect()
}

/// Right-hand-side correction `R_g` from the transport closures.
pub fn assemble_correction(closures: &SmmClosures, problem: &Problem) -> Vec<Vec<f64>> {
    let mesh = &problem.mesh;
    let n = mesh.num_vertices();
    closures
        .t
        .iter()
        .enumerate()
        .map(|(g, t)| {
            let mut r = vec![0.0; n];
            // volumetric: -int u' (1/sigma_t) dT/dx, all factors constant per cell
            for c in 0..mesh.num_cells() {
                let h = mesh.width(c);
                let grad_t = (t[c][1] - t[c][0]) / h;
                let term = grad_t / problem.xs(c).sigma_t[g];
                r[c] += term;
                r[c + 1] -= term;
            }
            // interior faces: average of u'/sigma_t times the trace difference
            for node in mesh.interior_nodes() {
                let (l, rc) = (node.left_cell, node.right_cell);
                let jump = t[l][1] - t[rc][0];
                let gl = 1.0 / (mesh.width(l) * problem.xs(l).sigma_t[g]);
                let gr = 1.0 / (mesh.width(rc) * problem.xs(rc).sigma_t[g]);
                let v = node.vertex;
                r[v - 1] += 0.5 * (-gl) * jump;
                r[v] += 0.5 * (gl - gr) * jump;
                r[v + 1] += 0.5 * gr * jump;
            }
            for b in &closures.boundaries {
                let v = match b.side {
                    Side::Left => 0,
                    Side::Right => n - 1,
                };
                r[v] -= b.beta[g];
            }
            r
        })
        .collect()
}

/// Linear solver used for the per-group diffusion systems.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LinearSolver {
    /// LDL^T factorization computed once per group.
    #[default]
    Direct,
    /// Jacobi-preconditioned CG with the given relative residual tolerance.
    Cg { rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowOrderOptions {
    pub epsilon_lambda: f64,
    pub max_outers: usize,
    /// Relative change of the multigroup flux that ends the group iteration;
    /// `None` means `max(1e-10, 0.01 * epsilon_lambda)`.
    pub inner_tol: Option<f64>,
    pub max_inner: usize,
    pub solver: LinearSolver,
}

impl Default for LowOrderOptions {
    fn default() -> Self {
        Self { epsilon_lambda: 1e-8, max_outers: 50, inner_tol: None, max_inner: 200, solver: LinearSolver::Direct }
    }
}

impl LowOrderOptions {
    pub fn inner_tolerance(&self) -> f64 {
        self.inner_tol.unwrap_or_else(|| (0.01 * self.epsilon_lambda).max(1e-10))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowOrderSolution {
    pub lambda: f64,
    /// Normalized to unit integrated fission production.
    pub flux: FemField,
    pub iterations: usize,
    pub inner_iterations: usize,
    /// Factor applied jointly to the flux and the correction source; the
    /// returned flux corresponds to `scale * R`.
    pub scale: f64,
    pub converged: bool,
}

/// Integrated balance terms of one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupBalance {
    pub leakage: f64,
    pub removal: f64,
    pub in_scatter: f64,
    pub fission: f64,
    pub correction: f64,
}

impl GroupBalance {
    /// `|loss - gain| / max(|loss|, |gain|)`
    pub fn relative_defect(&self) -> f64 {
        let loss = self.leakage + self.removal;
        let gain = self.in_scatter + self.fission + self.correction;
        (loss - gain).abs() / loss.abs().max(gain.abs())
    }
}

/// Per-group diffusion operators and matrix-free coupling.
pub struct DiffusionSystem<'a> {
    problem: &'a Problem,
    f_b: f64,
    matrices: Vec<Tridiagonal>,
    factors: Vec<LdlFactor>,
    solver: LinearSolver,
}

impl<'a> DiffusionSystem<'a> {
    pub fn new(problem: &'a Problem, f_b: f64, solver: LinearSolver) -> Result<Self> {
        let matrices = assemble_lhs(problem, f_b);
        let mut factors = Vec::new();
        // the factorization doubles as the positive-definiteness check
        for (group, a) in matrices.iter().enumerate() {
            let f = LdlFactor::new(a).map_err(|(row, pivot)| Error::NotPositiveDefinite { group, row, pivot })?;
            factors.push(f);
        }
        if matches!(solver, LinearSolver::Cg { .. }) {
            factors.clear();
        }
        Ok(Self { problem, f_b, matrices, factors, solver })
    }

    pub fn matrices(&self) -> &[Tridiagonal] {
        &self.matrices
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    pub fn num_groups(&self) -> usize {
        self.matrices.len()
    }

    pub fn solve_group(&self, g: usize, rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        match self.solver {
            LinearSolver::Direct => Ok(self.factors[g].solve(rhs)),
            LinearSolver::Cg { rel_tol } => {
                let mut x = guess.to_vec();
                let max_iter = 20 * x.len() + 100;
                let rep = pcg(&self.matrices[g], rhs, &mut x, rel_tol, max_iter);
                if !rep.converged {
                    return Err(Error::CgNotConverged {
                        group: g,
                        iterations: rep.iterations,
                        residual: rep.relative_residual,
                    });
                }
                Ok(x)
            }
        }
    }

    /// `int u_i sum_{g' != g} sigma_s,g'g phi_g'`
    pub fn in_scatter(&self, g: usize, flux: &FemField) -> Vec<f64> {
        let mesh = &self.problem.mesh;
        let mut y = vec![0.0; mesh.num_vertices()];
        for c in 0..mesh.num_cells() {
            let xs = self.problem.xs(c);
            let h = mesh.width(c);
            for (gp, phi) in flux.values.iter().enumerate() {
                let s = xs.sigma_s[gp][g];
                if gp != g && s != 0.0 {
                    add_cell_mass(&mut y, c, h, s, phi[c], phi[c + 1]);
                }
            }
        }
        y
    }

    /// `int u_i sum_g nu_sigma_f,g phi_g`
    pub fn fission_production(&self, flux: &FemField) -> Vec<f64> {
        self.fission_weighted(flux, None)
    }

    /// `int u_i chi_g sum_g' nu_sigma_f,g' phi_g'`
    pub fn fission_emission(&self, g: usize, flux: &FemField) -> Vec<f64> {
        self.fission_weighted(flux, Some(g))
    }

    fn fission_weighted(&self, flux: &FemField, chi_group: Option<usize>) -> Vec<f64> {
        let mesh = &self.problem.mesh;
        let mut y = vec![0.0; mesh.num_vertices()];
        for c in 0..mesh.num_cells() {
            let xs = self.problem.xs(c);
            let weight = chi_group.map_or(1.0, |g| xs.chi[g]);
            if weight == 0.0 || !xs.is_fissile() {
                continue;
            }
            let (mut fl, mut fr) = (0.0, 0.0);
            for (gp, phi) in flux.values.iter().enumerate() {
                fl += xs.nu_sigma_f[gp] * phi[c];
                fr += xs.nu_sigma_f[gp] * phi[c + 1];
            }
            add_cell_mass(&mut y, c, mesh.width(c), weight, fl, fr);
        }
        y
    }

    /// Integrated leakage, removal and source terms of each group for a
    /// candidate solution.
    pub fn balance(&self, flux: &FemField, lambda: f64, correction: &[Vec<f64>]) -> Vec<GroupBalance> {
        let mesh = &self.problem.mesh;
        let last = mesh.num_vertices() - 1;
        (0..self.num_groups())
            .map(|g| {
                let phi = &flux.values[g];
                let mut leakage = 0.0;
                if mesh.left_bc == BoundaryCondition::Vacuum {
                    leakage += self.f_b * phi[0];
                }
                if mesh.right_bc == BoundaryCondition::Vacuum {
                    leakage += self.f_b * phi[last];
                }
                let removal: f64 = self.matrices[g].matvec(phi).iter().sum::<f64>() - leakage;
                GroupBalance {
                    leakage,
                    removal,
                    in_scatter: self.in_scatter(g, flux).iter().sum(),
                    fission: self.fission_emission(g, flux).iter().sum::<f64>() / lambda,
                    correction: correction[g].iter().sum(),
                }
            })
            .collect()
    }
}

/// The l1 norm: for a non-negative fission source it is the integrated
/// production, so the eigenvalue update conserves the fission term of the
/// balance from one iterate to the next.
fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Power iteration on `(D - S) phi = F phi / lambda + R` with group-Jacobi
/// source iteration inside each outer.
pub fn solve_loworder_eigen(
    system: &DiffusionSystem,
    correction: &[Vec<f64>],
    initial: &FemField,
    lambda0: f64,
    options: &LowOrderOptions,
) -> Result<LowOrderSolution> {
    if !(lambda0 > 0.0) {
        return Err(Error::NonPositiveEigenvalue(lambda0));
    }
    let groups = system.num_groups();
    let inner_tol = options.inner_tolerance();
    let coupled = groups > 1 && {
        let p = system.problem();
        p.materials.iter().any(|m| (0..groups).any(|g| (0..groups).any(|gp| gp != g && m.sigma_s[gp][g] != 0.0)))
    };

    let mut flux = initial.clone();
    let mut correction: Vec<Vec<f64>> = correction.to_vec();
    let mut scale = 1.0;

    let mut production = system.fission_production(&flux);
    let total: f64 = production.iter().sum();
    if !(total.abs() > 0.0) || !total.is_finite() {
        return Err(Error::ZeroFissionNorm);
    }
    let s0 = 1.0 / total;
    flux.scale(s0);
    correction.iter_mut().flatten().for_each(|v| *v *= s0);
    production.iter_mut().for_each(|v| *v *= s0);
    scale *= s0;

    let mut lambda = lambda0;
    let mut iterations = 0;
    let mut inner_iterations = 0;
    let mut converged = false;
    while iterations < options.max_outers {
        iterations += 1;
        let fixed: Vec<Vec<f64>> = (0..groups)
            .map(|g| {
                system.fission_emission(g, &flux).iter().zip(&correction[g]).map(|(f, r)| f / lambda + r).collect()
            })
            .collect();

        let mut next = flux.clone();
        for _ in 0..options.max_inner.max(1) {
            inner_iterations += 1;
            let mut updated = FemField { values: Vec::with_capacity(groups) };
            for g in 0..groups {
                let mut rhs = fixed[g].clone();
                if coupled {
                    for (r, s) in rhs.iter_mut().zip(system.in_scatter(g, &next)) {
                        *r += s;
                    }
                }
                updated.values.push(system.solve_group(g, &rhs, &next.values[g])?);
            }
            let mut diff = 0.0;
            let mut norm = 0.0;
            for (a, b) in updated.values.iter().flatten().zip(next.values.iter().flatten()) {
                diff += (a - b) * (a - b);
                norm += a * a;
            }
            next = updated;
            if !coupled || diff.sqrt() <= inner_tol * norm.sqrt() {
                break;
            }
        }

        let new_production = system.fission_production(&next);
        let norm_old = l1(&production);
        let norm_new = l1(&new_production);
        if !(norm_new > 0.0) || !norm_new.is_finite() {
            return Err(Error::ZeroFissionNorm);
        }
        let new_lambda = lambda * norm_new / norm_old;

        let total: f64 = new_production.iter().sum();
        let s = 1.0 / total;
        next.scale(s);
        correction.iter_mut().flatten().for_each(|v| *v *= s);
        production = new_production.into_iter().map(|v| v * s).collect();
        scale *= s;
        flux = next;

        let change = (new_lambda - lambda).abs() / lambda.abs();
        lambda = new_lambda;
        if change < options.epsilon_lambda {
            converged = true;
            break;
        }
    }
    Ok(LowOrderSolution { lambda, flux, iterations, inner_iterations, scale, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{benchmark, CrossSectionSet};
    use crate::mesh::{BoundaryCondition::*, Region};
    use crate::quadrature::AngularQuadrature;
    use crate::transport::BoundaryClosure;
    use approx::assert_abs_diff_eq;

    fn slab(
        materials: Vec<CrossSectionSet>,
        regions: &[Region],
        bcs: (BoundaryCondition, BoundaryCondition),
    ) -> Problem {
        let mesh = SlabMesh::build_uniform(regions, materials.len(), bcs.0, bcs.1).unwrap();
        Problem::new(materials, mesh, AngularQuadrature::gauss_legendre(8).unwrap()).unwrap()
    }

    fn one_group(sigma_t: f64, sigma_s: f64, nu_sigma_f: f64) -> CrossSectionSet {
        CrossSectionSet {
            name: "m".into(),
            sigma_t: vec![sigma_t],
            sigma_s: vec![vec![sigma_s]],
            nu_sigma_f: vec![nu_sigma_f],
            chi: vec![if nu_sigma_f > 0.0 { 1.0 } else { 0.0 }],
        }
    }

    #[test]
    fn single_cell_matrix() {
        let p = slab(vec![one_group(3.0, 2.0, 0.0)], &[Region { width: 1.0, material: 0, cells: 1 }], (Vacuum, Vacuum));
        let fb = 0.5;
        let a = &assemble_lhs(&p, fb)[0];
        let d = 1.0 / 9.0;
        let expected = [[d + 1.0 / 3.0 + fb, -d + 1.0 / 6.0], [-d + 1.0 / 6.0, d + 1.0 / 3.0 + fb]];
        let dense = a.to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(dense[i][j], expected[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn reflective_matrix_is_positive_definite() {
        let p = slab(
            vec![one_group(1.0, 0.9, 0.0)],
            &[Region { width: 10.0, material: 0, cells: 20 }],
            (Reflective, Reflective),
        );
        assert!(DiffusionSystem::new(&p, 0.5, LinearSolver::Direct).is_ok());
    }

    #[test]
    fn benchmark_matrices_are_symmetric() {
        let p = slab(
            vec![benchmark::fuel(), benchmark::moderator()],
            &[Region { width: 80.0, material: 0, cells: 400 }, Region { width: 20.0, material: 1, cells: 100 }],
            (Reflective, Vacuum),
        );
        for a in assemble_lhs(&p, p.quadrature.boundary_factor()) {
            assert_eq!(a.symmetry_defect(), 0.0);
        }
    }

    fn closures(t: Vec<NodalField>, boundaries: Vec<BoundaryClosure>) -> SmmClosures {
        SmmClosures { t, boundaries }
    }

    #[test]
    fn zero_closures_give_zero_correction() {
        let p =
            slab(vec![one_group(1.0, 0.5, 0.0)], &[Region { width: 3.0, material: 0, cells: 3 }], (Reflective, Vacuum));
        let cl = closures(vec![vec![[0.0; 2]; 3]], vec![BoundaryClosure { side: Side::Right, beta: vec![0.0] }]);
        assert!(assemble_correction(&cl, &p)[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn continuous_closure_has_no_face_term() {
        // T = x on [0, 2] with sigma_t = 1: only the volumetric term survives,
        // which for a linear T is -int u' T' = (1, 0, -1)
        let p = slab(
            vec![one_group(1.0, 0.5, 0.0)],
            &[Region { width: 2.0, material: 0, cells: 2 }],
            (Reflective, Reflective),
        );
        let cl = closures(vec![vec![[0.0, 1.0], [1.0, 2.0]]], vec![]);
        let r = &assemble_correction(&cl, &p)[0];
        assert_abs_diff_eq!(r[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[2], -1.0, epsilon = 1e-15);
    }

    /// Independent evaluation of the correction functional for hat test
    /// functions: Gauss quadrature in each cell for the volumetric term and
    /// one-sided finite differences for the face averages.
    fn correction_oracle(p: &Problem, t: &NodalField, g: usize) -> Vec<f64> {
        let edges = p.mesh.edges().to_vec();
        let nv = edges.len();
        let hat = |i: usize, x: f64| -> f64 {
            let left = if i > 0 { edges[i - 1] } else { f64::NEG_INFINITY };
            let right = if i + 1 < nv { edges[i + 1] } else { f64::INFINITY };
            if x <= edges[i] && x >= left {
                if i == 0 {
                    1.0
                } else {
                    (x - left) / (edges[i] - left)
                }
            } else if x >= edges[i] && x <= right {
                if i + 1 == nv {
                    1.0
                } else {
                    (right - x) / (right - edges[i])
                }
            } else {
                0.0
            }
        };
        let cell_of = |x: f64| edges.windows(2).position(|w| x >= w[0] && x <= w[1]).unwrap();
        let t_at = |c: usize, x: f64| {
            let s = (x - edges[c]) / (edges[c + 1] - edges[c]);
            t[c][0] * (1.0 - s) + t[c][1] * s
        };
        let d = 1e-7;
        (0..nv)
            .map(|i| {
                let mut r = 0.0;
                for c in 0..edges.len() - 1 {
                    let (a, b) = (edges[c], edges[c + 1]);
                    let sig = p.xs(c).sigma_t[g];
                    for &s in &[-1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()] {
                        let x = 0.5 * (a + b) + 0.5 * (b - a) * s;
                        let du = (hat(i, x + d) - hat(i, x - d)) / (2.0 * d);
                        let dt = (t_at(c, x + d) - t_at(c, x - d)) / (2.0 * d);
                        r -= 0.5 * (b - a) * du * dt / sig;
                    }
                }
                for v in 1..nv - 1 {
                    let x = edges[v];
                    let (cl, cr) = (cell_of(x - d), cell_of(x + d));
                    let du_l = (hat(i, x - d) - hat(i, x - 2.0 * d)) / d / p.xs(cl).sigma_t[g];
                    let du_r = (hat(i, x + 2.0 * d) - hat(i, x + d)) / d / p.xs(cr).sigma_t[g];
                    r += 0.5 * (du_l + du_r) * (t[cl][1] - t[cr][0]);
                }
                r
            })
            .collect()
    }

    #[test]
    fn face_term_single_interior_node() {
        let p = slab(
            vec![one_group(1.0, 0.5, 0.0)],
            &[Region { width: 2.0, material: 0, cells: 2 }],
            (Reflective, Reflective),
        );
        let t = vec![[0.0, 0.0], [1.0, 1.0]];
        let r = assemble_correction(&closures(vec![t.clone()], vec![]), &p);
        let oracle = correction_oracle(&p, &t, 0);
        for (a, b) in r[0].iter().zip(&oracle) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(r[0][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r[0][1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[0][2], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn correction_matches_oracle_on_heterogeneous_mesh() {
        let p = slab(
            vec![one_group(1.3, 0.5, 0.0), one_group(0.4, 0.1, 0.0)],
            &[Region { width: 1.5, material: 0, cells: 3 }, Region { width: 2.0, material: 1, cells: 2 }],
            (Reflective, Reflective),
        );
        let t: NodalField = (0..5).map(|c| [0.3 * c as f64 - 0.2, (c as f64).sin()]).collect();
        let r = assemble_correction(&closures(vec![t.clone()], vec![]), &p);
        let oracle = correction_oracle(&p, &t, 0);
        for (a, b) in r[0].iter().zip(&oracle) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
        }
        // volumetric and face terms integrate to zero against u = 1
        assert!(r[0].iter().sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn beta_enters_boundary_vertex() {
        let p = slab(vec![one_group(1.0, 0.5, 0.0)], &[Region { width: 2.0, material: 0, cells: 2 }], (Vacuum, Vacuum));
        let cl = closures(
            vec![vec![[0.0; 2]; 2]],
            vec![
                BoundaryClosure { side: Side::Left, beta: vec![0.25] },
                BoundaryClosure { side: Side::Right, beta: vec![-0.5] },
            ],
        );
        assert_eq!(assemble_correction(&cl, &p)[0], vec![-0.25, 0.0, 0.5]);
    }

    #[test]
    fn projection_examples() {
        let p = slab(vec![one_group(1.0, 0.5, 0.0)], &[Region { width: 2.0, material: 0, cells: 2 }], (Vacuum, Vacuum));
        assert_eq!(project_to_fem(&[[0.0, 2.0], [4.0, 6.0]], &p.mesh), vec![0.0, 3.0, 6.0]);
        assert_eq!(inject_from_fem(&[0.0, 3.0, 6.0], &p.mesh), vec![[0.0, 3.0], [3.0, 6.0]]);

        let mesh = SlabMesh::new(vec![0.0, 1.0, 4.0], vec![0, 0], Vacuum, Vacuum).unwrap();
        assert_eq!(project_to_fem(&[[1.0, 2.0], [6.0, 7.0]], &mesh), vec![1.0, 5.0, 7.0]);
    }

    #[test]
    fn projection_roundtrips_continuous_data() {
        let mesh = SlabMesh::new(vec![0.0, 0.5, 2.0, 2.25, 3.0], vec![0; 4], Vacuum, Vacuum).unwrap();
        let v = vec![1.0, -2.0, 0.5, 3.0, 4.0];
        assert_eq!(project_to_fem(&inject_from_fem(&v, &mesh), &mesh), v);
    }

    #[test]
    fn projection_preserves_integral() {
        // trapezoid integral of the projection vs exact integral of the LD field
        let mesh = SlabMesh::new(vec![0.0, 1.0, 4.0, 4.5], vec![0; 3], Vacuum, Vacuum).unwrap();
        let phi = vec![[1.0, 2.0], [2.0, 5.0], [5.0, 1.0]];
        let exact: f64 = phi.iter().enumerate().map(|(c, v)| mesh.width(c) * (v[0] + v[1]) / 2.0).sum();
        let proj = project_to_fem(&phi, &mesh);
        let trap: f64 = (0..3).map(|c| mesh.width(c) * (proj[c] + proj[c + 1]) / 2.0).sum();
        assert!((exact - trap).abs() <= 1e-12 * exact);
    }

    #[test]
    fn one_group_infinite_medium_eigenvalue() {
        let p = slab(
            vec![one_group(1.0, 0.7, 0.36)],
            &[Region { width: 10.0, material: 0, cells: 10 }],
            (Reflective, Reflective),
        );
        let sys = DiffusionSystem::new(&p, 0.5, LinearSolver::Direct).unwrap();
        let r = vec![vec![0.0; 11]];
        let sol =
            solve_loworder_eigen(&sys, &r, &FemField::constant(1, 11, 1.0), 1.0, &LowOrderOptions::default()).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.lambda, 1.2, epsilon = 1e-12);
    }

    #[test]
    fn two_group_infinite_medium_eigenvalue() {
        let fuel = benchmark::fuel();
        let p = slab(vec![fuel.clone()], &[Region { width: 5.0, material: 0, cells: 5 }], (Reflective, Reflective));
        let sys = DiffusionSystem::new(&p, 0.5, LinearSolver::Direct).unwrap();
        let r = vec![vec![0.0; 6]; 2];
        let opts = LowOrderOptions { max_outers: 500, epsilon_lambda: 1e-13, ..Default::default() };
        let sol = solve_loworder_eigen(&sys, &r, &FemField::constant(2, 6, 1.0), 1.0, &opts).unwrap();
        let k_inf = two_group_k_inf(&fuel);
        assert_abs_diff_eq!(sol.lambda, k_inf, epsilon = 1e-10);
    }

    /// Dominant eigenvalue of F (Sigma_r - S_off)^-1 for a flat two-group flux.
    fn two_group_k_inf(m: &CrossSectionSet) -> f64 {
        // A phi = (1/k) chi nu^T phi with A = [[r1, -s21], [-s12, r2]]
        let (r1, r2) = (m.sigma_t[0] - m.sigma_s[0][0], m.sigma_t[1] - m.sigma_s[1][1]);
        let (s12, s21) = (m.sigma_s[0][1], m.sigma_s[1][0]);
        let det = r1 * r2 - s12 * s21;
        let inv = [[r2 / det, s21 / det], [s12 / det, r1 / det]];
        // rank-one operator: k = nu^T A^-1 chi
        let a_chi = [inv[0][0] * m.chi[0] + inv[0][1] * m.chi[1], inv[1][0] * m.chi[0] + inv[1][1] * m.chi[1]];
        m.nu_sigma_f[0] * a_chi[0] + m.nu_sigma_f[1] * a_chi[1]
    }

    #[test]
    fn cg_matches_direct_solver() {
        let p = slab(
            vec![benchmark::fuel(), benchmark::moderator()],
            &[Region { width: 8.0, material: 0, cells: 40 }, Region { width: 2.0, material: 1, cells: 10 }],
            (Reflective, Vacuum),
        );
        let fb = p.quadrature.boundary_factor();
        let direct = DiffusionSystem::new(&p, fb, LinearSolver::Direct).unwrap();
        let cg = DiffusionSystem::new(&p, fb, LinearSolver::Cg { rel_tol: 1e-12 }).unwrap();
        let rhs: Vec<f64> = (0..51).map(|i| 1.0 + (i as f64).cos()).collect();
        for g in 0..2 {
            let a = direct.solve_group(g, &rhs, &vec![0.0; 51]).unwrap();
            let b = cg.solve_group(g, &rhs, &vec![0.0; 51]).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9 * x.abs());
            }
        }
    }

    #[test]
    fn balance_of_flat_flux() {
        let p = slab(
            vec![one_group(1.0, 0.7, 0.36)],
            &[Region { width: 10.0, material: 0, cells: 4 }],
            (Reflective, Reflective),
        );
        let sys = DiffusionSystem::new(&p, 0.5, LinearSolver::Direct).unwrap();
        let b = sys.balance(&FemField::constant(1, 5, 2.0), 1.2, &[vec![0.0; 5]])[0];
        // no gradient and no vacuum face: removal 0.3 * 2 * 10, fission 0.36 * 2 * 10 / 1.2
        assert_eq!(b.leakage, 0.0);
        assert_abs_diff_eq!(b.removal, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.fission, 6.0, epsilon = 1e-12);
        assert!(b.relative_defect() < 1e-14);
    }

    #[test]
    fn converged_solution_balances_with_scaled_correction() {
        let p = slab(
            vec![benchmark::fuel(), benchmark::moderator()],
            &[Region { width: 8.0, material: 0, cells: 40 }, Region { width: 2.0, material: 1, cells: 10 }],
            (Reflective, Vacuum),
        );
        let t: Vec<NodalField> = (0..2)
            .map(|g| {
                (0..50).map(|c| [0.01 * (c as f64 * 0.3).sin(), 0.01 * (g as f64 + c as f64 * 0.2).cos()]).collect()
            })
            .collect();
        let beta = BoundaryClosure { side: Side::Right, beta: vec![0.02, -0.01] };
        let correction = assemble_correction(&closures(t, vec![beta]), &p);
        let sys = DiffusionSystem::new(&p, p.quadrature.boundary_factor(), LinearSolver::Direct).unwrap();
        let opts = LowOrderOptions { epsilon_lambda: 1e-13, max_outers: 2000, ..Default::default() };
        let sol = solve_loworder_eigen(&sys, &correction, &FemField::constant(2, 51, 1.0), 1.0, &opts).unwrap();
        assert!(sol.converged);
        let scaled: Vec<Vec<f64>> = correction.iter().map(|r| r.iter().map(|v| v * sol.scale).collect()).collect();
        for b in sys.balance(&sol.flux, sol.lambda, &scaled) {
            assert!(b.correction != 0.0);
            assert!(b.relative_defect() < 1e-9, "{b:?}");
        }
    }

    #[test]
    fn rejects_zero_fission() {
        let p = slab(vec![one_group(1.0, 0.5, 0.0)], &[Region { width: 1.0, material: 0, cells: 2 }], (Vacuum, Vacuum));
        let sys = DiffusionSystem::new(&p, 0.5, LinearSolver::Direct).unwrap();
        let err = solve_loworder_eigen(
            &sys,
            &[vec![0.0; 3]],
            &FemField::constant(1, 3, 1.0),
            1.0,
            &LowOrderOptions::default(),
        );
        assert!(matches!(err, Err(Error::ZeroFissionNorm)));
    }
}
