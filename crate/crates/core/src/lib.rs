//! Multigroup discrete-ordinates k-eigenvalue transport for 1D slabs,
//! accelerated with the second moment method (SMM).
//!
//! The high-order side is a linear discontinuous (LD) Galerkin sweep over a
//! Gauss-Legendre quadrature. Its angular moments feed additive closures into
//! a continuous linear finite-element diffusion eigenproblem, which is solved
//! with preconditioned conjugate gradients or a direct tridiagonal factorization.
//!
//! ```no_run
//! use slab_smm::eigensolver::{solve_smm, SolverConfig};
//! use slab_smm::workbench::problem::ProblemFile;
//!
//! let file = ProblemFile::from_path("problems/two_region_slab.json").unwrap();
//! let problem = file.build().unwrap();
//! let solution = solve_smm(&problem, &SolverConfig::default()).unwrap();
//! println!("k = {:.6} after {} outers", solution.k_eff, solution.outers);
//! ```
#![allow(clippy::needless_range_loop)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigensolver;
pub mod error;
pub mod loworder;
pub mod materials;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod transport;
pub mod workbench;

pub use error::{Error, Result};
pub use problem::Problem;
