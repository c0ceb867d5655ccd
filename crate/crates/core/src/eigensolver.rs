//! Outer iteration drivers: SMM acceleration and unaccelerated power iteration.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loworder::{assemble_correction, solve_loworder_eigen, DiffusionSystem, FemField, LowOrderOptions};
use crate::problem::Problem;
use crate::transport::{
    build_group_source, compute_closures, emission_density, fission_density, nodal_integrals, BoundaryFluxes,
    NodalField, SpatialScheme, Sweeper, TransportState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pi,
    Smm,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Pi => "PI",
            Method::Smm => "SMM",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pi" => Ok(Method::Pi),
            "smm" => Ok(Method::Smm),
            other => Err(format!("unknown method `{other}` (expected pi or smm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Relative eigenvalue change that ends the outer iteration.
    pub epsilon_k: f64,
    /// Optional l2 tolerance on the change of the fission-normalized flux.
    pub epsilon_phi: Option<f64>,
    pub max_outers: usize,
    /// Relative l2 change ending the PI source iteration.
    pub pi_inner_tol: f64,
    pub pi_max_inner: usize,
    pub low_order: LowOrderOptions,
    pub scheme: SpatialScheme,
    /// Threads used for direction sweeps; 1 runs serially.
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Smm,
            epsilon_k: 1e-8,
            epsilon_phi: None,
            max_outers: 1000,
            pi_inner_tol: 1e-9,
            pi_max_inner: 100_000,
            low_order: LowOrderOptions::default(),
            scheme: SpatialScheme::Unlumped,
            workers: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("epsilon_k", self.epsilon_k)?;
        if let Some(e) = self.epsilon_phi {
            positive("epsilon_phi", e)?;
        }
        positive("pi_inner_tol", self.pi_inner_tol)?;
        positive("low_order.epsilon_lambda", self.low_order.epsilon_lambda)?;
        if self.max_outers == 0 || self.low_order.max_outers == 0 || self.pi_max_inner == 0 {
            return Err(Error::InvalidConfig("iteration limits must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    pub method: Method,
    pub k_eff: f64,
    /// Continuous nodal scalar flux, normalized to unit fission production.
    pub flux: FemField,
    pub vertices: Vec<f64>,
    pub outers: usize,
    /// One sweep is every direction of every group over the mesh once.
    pub sweeps: usize,
    pub low_order_iterations: usize,
    pub wall_time_s: f64,
    /// k after each outer.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Integrated fission production of a continuous field (exact for linear elements).
pub fn fission_total(problem: &Problem, flux: &FemField) -> f64 {
    let mesh = &problem.mesh;
    (0..mesh.num_cells())
        .map(|c| {
            let xs = problem.xs(c);
            let h = mesh.width(c);
            flux.values.iter().enumerate().map(|(g, v)| xs.nu_sigma_f[g] * h * 0.5 * (v[c] + v[c + 1])).sum::<f64>()
        })
        .sum()
}

/// Eigenvalue criterion and, when enabled, the l2 change of the flux after
/// both iterates are normalized to unit fission production.
pub fn convergence_test(
    k_new: f64,
    k_old: f64,
    phi_new: &FemField,
    phi_old: &FemField,
    problem: &Problem,
    config: &SolverConfig,
) -> bool {
    let k_ok = (k_new - k_old).abs() / k_old.abs() < config.epsilon_k;
    let Some(eps_phi) = config.epsilon_phi else {
        return k_ok;
    };
    if !k_ok {
        return false;
    }
    let (a, b) = (fission_total(problem, phi_new), fission_total(problem, phi_old));
    let diff: f64 = phi_new
        .values
        .iter()
        .flatten()
        .zip(phi_old.values.iter().flatten())
        .map(|(x, y)| (x / a - y / b).powi(2))
        .sum();
    diff.sqrt() < eps_phi
}

fn production_vector(problem: &Problem, phi: &[NodalField]) -> Vec<f64> {
    nodal_integrals(&problem.mesh, &fission_density(problem, phi))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scale_field(phi: &mut [NodalField], s: f64) {
    for v in phi.iter_mut().flatten() {
        v[0] *= s;
        v[1] *= s;
    }
}

fn initial_flux(problem: &Problem) -> Vec<NodalField> {
    let mut phi = vec![vec![[1.0; 2]; problem.mesh.num_cells()]; problem.num_groups()];
    let total: f64 = production_vector(problem, &phi).iter().sum();
    scale_field(&mut phi, 1.0 / total);
    phi
}

fn check_inputs(problem: &Problem, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    if !problem.is_fissile() {
        return Err(Error::NoFissionSource);
    }
    Ok(())
}

fn finish(mut solution: EigenSolution, start: Instant) -> Result<EigenSolution> {
    solution.wall_time_s = start.elapsed().as_secs_f64();
    if solution.converged {
        Ok(solution)
    } else {
        Err(Error::NotConverged(Box::new(solution)))
    }
}

/// Runs the configured method.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<EigenSolution> {
    match config.method {
        Method::Pi => solve_pi(problem, config),
        Method::Smm => solve_smm(problem, config),
    }
}

/// SMM outer iteration: one transport sweep per outer supplies closures to
/// the low-order eigenproblem, whose eigenvalue and flux become the next
/// transport iterate.
pub fn solve_smm(problem: &Problem, config: &SolverConfig) -> Result<EigenSolution> {
    check_inputs(problem, config)?;
    let start = Instant::now();
    let mesh = &problem.mesh;
    let quad = &problem.quadrature;
    let sweeper = Sweeper::new(problem, config.scheme, config.workers)?;
    let system = DiffusionSystem::new(problem, quad.boundary_factor(), config.low_order.solver)?;

    let mut k = 1.0;
    let mut phi = initial_flux(problem);
    let mut current = FemField::project(&phi, mesh);
    let mut boundary = BoundaryFluxes::isotropic_estimate(problem, &build_group_source(problem, &phi, k)?);

    let mut solution = EigenSolution {
        method: Method::Smm,
        k_eff: k,
        flux: current.clone(),
        vertices: mesh.edges().to_vec(),
        outers: 0,
        sweeps: 0,
        low_order_iterations: 0,
        wall_time_s: 0.0,
        history: Vec::new(),
        converged: false,
    };

    while solution.outers < config.max_outers {
        let source = build_group_source(problem, &phi, k)?;
        let psi = sweeper.sweep(&source, &mut boundary);
        solution.outers += 1;
        solution.sweeps += 1;

        let state = TransportState::from_psi(psi, quad);
        let closures = compute_closures(&state, quad, mesh);
        let correction = assemble_correction(&closures, problem);
        let lo = solve_loworder_eigen(&system, &correction, &current, k, &config.low_order)?;
        solution.low_order_iterations += lo.iterations;
        // stored outflows carry the amplitude of the transport flux; move them
        // to the amplitude of the new iterate
        let transport_flux = FemField::project(&state.phi, mesh);
        boundary.scale(fission_total(problem, &lo.flux) / fission_total(problem, &transport_flux));

        let done = convergence_test(lo.lambda, k, &lo.flux, &current, problem, config);
        k = lo.lambda;
        phi = lo.flux.inject(mesh);
        current = lo.flux;
        solution.history.push(k);
        if done {
            solution.converged = true;
            break;
        }
    }
    solution.k_eff = k;
    solution.flux = current;
    finish(solution, start)
}

/// Power iteration with each fixed-source problem converged by Richardson
/// source iteration; every sweep is counted.
pub fn solve_pi(problem: &Problem, config: &SolverConfig) -> Result<EigenSolution> {
    check_inputs(problem, config)?;
    let start = Instant::now();
    let mesh = &problem.mesh;
    let sweeper = Sweeper::new(problem, config.scheme, config.workers)?;

    let mut k = 1.0;
    let mut phi = initial_flux(problem);
    let mut production = production_vector(problem, &phi);
    let mut boundary = BoundaryFluxes::isotropic_estimate(problem, &build_group_source(problem, &phi, k)?);

    let mut solution = EigenSolution {
        method: Method::Pi,
        k_eff: k,
        flux: FemField::project(&phi, mesh),
        vertices: mesh.edges().to_vec(),
        outers: 0,
        sweeps: 0,
        low_order_iterations: 0,
        wall_time_s: 0.0,
        history: Vec::new(),
        converged: false,
    };

    while solution.outers < config.max_outers {
        solution.outers += 1;
        let fission: NodalField = fission_density(problem, &phi).into_iter().map(|f| [f[0] / k, f[1] / k]).collect();

        let mut inner = phi.clone();
        for _ in 0..config.pi_max_inner {
            let source = emission_density(problem, &inner, &fission);
            let next = sweeper.sweep_scalar(&source, &mut boundary);
            solution.sweeps += 1;
            let mut diff = 0.0;
            let mut norm = 0.0;
            for (a, b) in next.iter().flatten().zip(inner.iter().flatten()) {
                diff += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
                norm += a[0] * a[0] + a[1] * a[1];
            }
            inner = next;
            if diff.sqrt() < config.pi_inner_tol * norm.sqrt() {
                break;
            }
        }

        let new_production = production_vector(problem, &inner);
        let norm_new = l2(&new_production);
        if !(norm_new > 0.0) || !norm_new.is_finite() {
            return Err(Error::ZeroFissionNorm);
        }
        let k_new = k * norm_new / l2(&production);
        let s = 1.0 / new_production.iter().sum::<f64>();
        scale_field(&mut inner, s);
        boundary.scale(s);
        production = new_production.into_iter().map(|v| v * s).collect();

        let next_flux = FemField::project(&inner, mesh);
        let done = convergence_test(k_new, k, &next_flux, &solution.flux, problem, config);
        k = k_new;
        phi = inner;
        solution.flux = next_flux;
        solution.history.push(k);
        if done {
            solution.converged = true;
            break;
        }
    }
    solution.k_eff = k;
    finish(solution, start)
}
