//! Reproduction harness: problem files, refinement studies, result files.

pub mod emit;
pub mod problem;
pub mod study;

pub use problem::ProblemFile;
pub use study::{estimate_order, figure_of_merit, run_refinement_study, StudyResult, StudyRow};
