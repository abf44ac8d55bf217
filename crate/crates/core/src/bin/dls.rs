use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use dls::formulation::FormulationKind;
use dls::study::{run_study, Precision, SolverSet, StudyConfig, StudyKind};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Study {
    Converge,
    Condition,
    Failure,
    Acoustics,
    CompareFosls,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Ne,
    Qr,
    Both,
}

/// Refinement studies for discrete least-squares finite elements.
#[derive(Debug, Parser)]
#[command(name = "dls", version)]
struct Cli {
    study: Study,
    #[arg(long, default_value = "ultraweak-dpg")]
    formulation: String,
    /// Manufactured case (defaults depend on the study).
    #[arg(long)]
    case: Option<String>,
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    dp: usize,
    /// Comma-separated enrichment levels for compare-fosls.
    #[arg(long, value_delimiter = ',')]
    dp_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = 4)]
    refinements: usize,
    /// Elements per side of the coarsest mesh.
    #[arg(long)]
    start: Option<usize>,
    #[arg(long, value_enum, default_value = "double")]
    precision: PrecisionArg,
    #[arg(long, value_enum, default_value = "both")]
    solver: SolverArg,
    /// Acoustics frequency (defaults to the near-resonant value).
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    no_condense: bool,
    #[arg(long)]
    no_precondition_gram: bool,
    #[arg(long)]
    no_precondition_global: bool,
    #[arg(long)]
    dump_matrices: bool,
    #[arg(long)]
    out: PathBuf,
}

fn config(cli: Cli) -> dls::Result<StudyConfig> {
    let study = match cli.study {
        Study::Converge => StudyKind::Converge,
        Study::Condition => StudyKind::Condition,
        Study::Failure => StudyKind::Failure,
        Study::Acoustics => StudyKind::Acoustics,
        Study::CompareFosls => StudyKind::CompareFosls,
    };
    let formulation: FormulationKind = cli.formulation.parse()?;
    let mut cfg = StudyConfig::new(study, formulation, cli.p, cli.dp, cli.refinements);
    cfg.case = cli.case;
    if let Some(list) = cli.dp_list {
        cfg.dp_list = list;
    }
    cfg.start = cli.start;
    cfg.precision = match cli.precision {
        PrecisionArg::Single => Precision::Single,
        PrecisionArg::Double => Precision::Double,
    };
    cfg.solvers = match cli.solver {
        SolverArg::Ne => SolverSet { ne: true, qr: false },
        SolverArg::Qr => SolverSet { ne: false, qr: true },
        SolverArg::Both => SolverSet::BOTH,
    };
    cfg.omega = cli.omega;
    cfg.condense = !cli.no_condense;
    cfg.precondition_gram = !cli.no_precondition_gram;
    cfg.precondition_global = !cli.no_precondition_global;
    cfg.dump_matrices = cli.dump_matrices;
    cfg.out = Some(cli.out);
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config(cli).and_then(|cfg| run_study(&cfg));
    match result {
        Ok(report) => {
            print!("{}", report.csv());
            if report.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &report.failures {
                    eprintln!("solver {} failed at n = {}: {}", f.solver, f.n, f.error);
                }
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
