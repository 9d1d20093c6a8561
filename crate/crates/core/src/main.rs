use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hjcov::expr::InternalMetric;
use hjcov::hj::HjError;
use hjcov::model::{builtin_with, Model};
use hjcov::{covariant, dsl, hj, report};

#[derive(Parser)]
#[command(name = "hjcov", version, about = "Hamilton-Jacobi and covariant phase-space analysis of first-order field theories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Covariant,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Euclidean,
    Lorentzian,
}

#[derive(Subcommand)]
enum Command {
    /// Run the constraint analysis on a model file or a builtin model.
    Analyze {
        /// Model file (.hjm).
        #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
        model: Option<PathBuf>,
        /// Builtin model: pcs, palatini, abelian-cs, maxwell-first-order.
        #[arg(long)]
        builtin: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Extra verification stage.
        #[arg(long, value_enum)]
        check: Option<Check>,
        #[arg(long, default_value_t = 10)]
        max_int_iterations: usize,
        /// Overrides the model's metric directive.
        #[arg(long, value_enum)]
        internal_metric: Option<Metric>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const USAGE: u8 = 1;
const FAILING: u8 = 2;
const LIMIT: u8 = 3;

fn load(model: Option<PathBuf>, builtin: Option<String>, metric: Option<InternalMetric>) -> Result<Model, String> {
    match (model, builtin) {
        (_, Some(name)) => builtin_with(&name, metric).map_err(|e| e.to_string()),
        (Some(path), None) => {
            let src = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            dsl::parse_model_with(&src, metric).map_err(|e| format!("{}: {e}", path.display()))
        }
        (None, None) => Err("no model given".into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let Command::Analyze { model, builtin, format, check, max_int_iterations, internal_metric, out } = cli.command;
    let metric = internal_metric.map(|m| match m {
        Metric::Euclidean => InternalMetric::Euclidean,
        Metric::Lorentzian => InternalMetric::Lorentzian,
    });
    let m = match load(model, builtin, metric) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    let analysis = match hj::analyze(&m, max_int_iterations) {
        Ok(a) => a,
        Err(e @ (HjError::Singular { .. } | HjError::NonConvergence { .. } | HjError::Unsupported(_) | HjError::Variational(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(LIMIT);
        }
    };
    let cov = match check {
        Some(Check::Covariant) => match covariant::analyze(&m, Some(&analysis)) {
            Ok(c) => Some(c),
            Err(covariant::CovariantError::Model(e)) => {
                eprintln!("error: {e}");
                return ExitCode::from(USAGE);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(LIMIT);
            }
        },
        None => None,
    };
    let r = report::build(&m, &analysis, cov.as_ref());
    let doc = match format {
        Format::Text => report::to_text(&r),
        Format::Json => r.to_json(),
    };
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, doc) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(USAGE);
            }
        }
        None => print!("{doc}"),
    }
    if r.all_checks_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILING)
    }
}
