use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slab_smm::eigensolver::{solve, EigenSolution, Method};
use slab_smm::workbench::emit::{emit_solution, emit_study, format_k, significant};
use slab_smm::workbench::problem::{check_refinements, ProblemFile, RunMode};
use slab_smm::workbench::study::{figure_of_merit, run_refinement_study, StudyResult};
use slab_smm::Error;

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_INVALID_INPUT: u8 = 3;
const EXIT_FAILURE: u8 = 1;

/// SMM-accelerated k-eigenvalue transport for 1D multigroup slabs.
#[derive(Parser)]
#[command(name = "slab-smm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem file.
    Solve(SolveArgs),
    /// Mesh-refinement study against finer reference meshes.
    Study(StudyArgs),
    /// Figure of merit 1 / (|k - k_ref| * T * P).
    Fom(FomArgs),
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    /// Outer iteration scheme (overrides the problem file).
    #[arg(long)]
    method: Option<Method>,
    /// Multiply every region's cell count.
    #[arg(long = "cells-scale")]
    cells_scale: Option<f64>,
    /// Quadrature order (overrides the problem file).
    #[arg(long)]
    sn: Option<usize>,
    /// Directory for run.json, summary.csv and flux.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep threads (overrides the problem file).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct StudyArgs {
    problem: PathBuf,
    /// Comma-separated total cell counts, each double the previous.
    #[arg(long, value_delimiter = ',')]
    refinements: Option<Vec<usize>>,
    /// Total cells of the reference meshes.
    #[arg(long)]
    reference: Option<usize>,
    /// Skip the unaccelerated transport reference (no e_DO column).
    #[arg(long)]
    no_transport_reference: bool,
    #[arg(long)]
    sn: Option<usize>,
    /// Directory for study.csv and study.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct FomArgs {
    #[arg(long, allow_hyphen_values = true)]
    k: f64,
    #[arg(long, allow_hyphen_values = true)]
    kref: f64,
    /// Wall time in seconds.
    #[arg(long, allow_hyphen_values = true)]
    time: f64,
    /// Processor count.
    #[arg(long)]
    procs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Study(args) => run_study(args),
        Command::Fom(args) => run_fom(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotConverged(_) => EXIT_NOT_CONVERGED,
        Error::InvalidInput(_)
        | Error::InvalidMaterial { .. }
        | Error::MaterialViolations { .. }
        | Error::InvalidMesh(_)
        | Error::InvalidQuadrature(_)
        | Error::InvalidConfig(_)
        | Error::NoFissionSource => EXIT_INVALID_INPUT,
        _ => EXIT_FAILURE,
    }
}

/// Reads the problem file; an unreadable file is invalid input.
fn load(path: &Path) -> Result<ProblemFile, Error> {
    ProblemFile::from_path(path).map_err(|e| match e {
        Error::Io { .. } => Error::InvalidInput(vec![e.to_string()]),
        other => other,
    })
}

fn print_solution(s: &EigenSolution) {
    println!("method   {}", s.method.label());
    println!("cells    {}", s.vertices.len().saturating_sub(1));
    println!("k_eff    {}", format_k(s.k_eff));
    println!("outers   {}", s.outers);
    println!("sweeps   {}", s.sweeps);
    println!("time_s   {:.3}", s.wall_time_s);
}

fn run_solve(args: SolveArgs) -> Result<ExitCode, Error> {
    let mut file = load(&args.problem)?;
    if let Some(f) = args.cells_scale {
        file = file.scale_cells(f)?;
    }
    if let Some(n) = args.sn {
        file = file.with_sn_order(n);
    }
    if let Some(m) = args.method {
        file.method = m;
    }
    if let Some(w) = args.workers {
        file.workers = w;
    }
    let problem = file.build()?;
    let config = file.solver_config();
    let (solution, converged) = match solve(&problem, &config) {
        Ok(s) => (s, true),
        Err(Error::NotConverged(s)) => (*s, false),
        Err(e) => return Err(e),
    };
    print_solution(&solution);
    if let Some(k) = file.reference_k {
        println!("delta_pcm {:.2}", (solution.k_eff - k) / k * 1e5);
    }
    if let Some(dir) = args.out.or_else(|| file.output.dir.as_ref().map(PathBuf::from)) {
        let out = emit_solution(&dir, &file, &solution, file.output.flux_csv)?;
        println!("record   {}", out.record.display());
    }
    if converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: not converged in {} outers", solution.outers);
        Ok(ExitCode::from(EXIT_NOT_CONVERGED))
    }
}

fn print_study(study: &StudyResult) {
    if let Some(r) = &study.reference {
        println!("reference {} {} cells: k = {}", r.method.label(), r.cells, significant(r.k_eff, 8));
    }
    if let Some(r) = &study.transport_reference {
        println!("reference {} {} cells: k = {}", r.method.label(), r.cells, significant(r.k_eff, 8));
    }
    println!("{:>6}  {:>10}  {:>10}  {:>10}  {:>6}  {:>8}", "cells", "k_eff", "e", "e_DO", "order", "order_DO");
    let sci = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
    let ord = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    for r in &study.rows {
        println!(
            "{:>6}  {:>10}  {:>10}  {:>10}  {:>6}  {:>8}",
            r.cells,
            significant(r.k_eff, 7),
            sci(Some(r.e)),
            sci(r.e_do),
            ord(r.order),
            ord(r.order_do)
        );
    }
}

fn run_study(args: StudyArgs) -> Result<ExitCode, Error> {
    let mut file = load(&args.problem)?;
    if let Some(n) = args.sn {
        file = file.with_sn_order(n);
    }
    if let Some(w) = args.workers {
        file.workers = w;
    }
    let (file_refinements, file_reference) = match &file.run_mode {
        RunMode::RefineStudy { refinements, reference } => (Some(refinements.clone()), Some(*reference)),
        RunMode::Single => (None, None),
    };
    let (Some(refinements), Some(reference)) =
        (args.refinements.or(file_refinements), args.reference.or(file_reference))
    else {
        return Err(Error::InvalidInput(vec![
            "study needs --refinements and --reference (or a refine_study run_mode in the problem file)".into(),
        ]));
    };
    let errors = check_refinements(&refinements, reference);
    if !errors.is_empty() {
        return Err(Error::InvalidInput(errors));
    }
    // fail on invalid input before any solve
    file.build()?;
    let study =
        run_refinement_study(&file, &file.solver_config(), &refinements, reference, !args.no_transport_reference)?;
    print_study(&study);
    if let Some(dir) = args.out.or_else(|| file.output.dir.as_ref().map(PathBuf::from)) {
        let (csv, _) = emit_study(&dir, &study)?;
        println!("table    {}", csv.display());
    }
    if study.complete {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: study incomplete: {}", study.failure.as_deref().unwrap_or("unknown failure"));
        Ok(ExitCode::from(EXIT_NOT_CONVERGED))
    }
}

fn run_fom(args: FomArgs) -> Result<ExitCode, Error> {
    let eta = figure_of_merit(args.k, args.kref, args.time, args.procs)?;
    println!("eta = {eta:.3}");
    Ok(ExitCode::SUCCESS)
}
