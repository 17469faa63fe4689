use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use quadamp::baselines::lasso_cv_fit;
use quadamp::matrix_io::{read_matrix, write_matrix};
use quadamp::synthetic::{Dataset, DatasetSpec};
use quadamp::{
    amp_run, eb_amp_run, expand_quadratic, normalize_columns, pseudoinverse_solve, AmpConfig,
    BayesModelSpec, ColumnPriors, EbConfig, FeatureMatrix, GroupPriorSet, LassoConfig, SinusoidSpec,
};
use quadamp_cli::experiments::{run_bayes_experiment, run_eb_experiment, run_spectrum_experiment};
use quadamp_cli::{ExperimentKind, ExperimentSpec, SolverKind};

#[derive(Parser)]
#[command(name = "quadamp", version, about = "Quadratic kernel regression with AMP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment spec; unspecified fields take the defaults of the kind.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of amp, eb_amp, lasso, pseudoinverse.
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Planted quadratic model (coefficient and test MSE per solver).
    Bayes(ExperimentArgs),
    /// Sinusoid targets at several measurement rates.
    Eb(ExperimentArgs),
    /// Singular values of the normalized design.
    Spectrum {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Store every singular value in the report.
        #[arg(long)]
        keep_all_svs: bool,
    },
    /// Expands a feature CSV into the quadratic design.
    Expand {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Divide every column by its norm.
        #[arg(long)]
        normalize: bool,
    },
    /// Fits one solver to a dataset directory and prints the result as JSON.
    Solve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        solver: SolverArg,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Group priors as JSON for `amp`; defaults to the planted priors.
        #[arg(long)]
        priors: Option<PathBuf>,
    },
    /// Writes a synthetic dataset directory.
    Generate {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        n: usize,
        /// Training rows.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Amp,
    EbAmp,
    Lasso,
    Pseudoinverse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Bayes,
    Sinusoid,
}

fn resolve_spec(kind: ExperimentKind, args: &ExperimentArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec = ExperimentSpec::from_json(&text)?;
            anyhow::ensure!(spec.kind == kind, "spec kind {:?} does not match the subcommand", spec.kind);
            spec
        }
        None => ExperimentSpec::defaults(kind),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.output_dir = Some(out.clone());
    }
    if let Some(list) = &args.solvers {
        spec.solvers = list
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| SolverKind::parse(s))
            .collect::<Result<_>>()?;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    spec.validate()?;
    Ok(spec)
}

fn print_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn solve(dataset: &Path, solver: SolverArg, seed: u64, priors: Option<&Path>) -> Result<quadamp::SolverResult> {
    let (data, _) = Dataset::load(dataset)?;
    let prep = data.prepare()?;
    let y = &data.y_train;
    let amp = AmpConfig {
        seed,
        ..AmpConfig::default()
    };
    Ok(match solver {
        SolverArg::Amp => {
            let set = match priors {
                Some(p) => GroupPriorSet::from_json(&fs::read_to_string(p)?)?,
                None => GroupPriorSet::planted(),
            };
            let priors = ColumnPriors::for_normalized_design(&set, &prep.train);
            amp_run(&prep.train, y, &priors, &amp)?
        }
        SolverArg::EbAmp => eb_amp_run(&prep.train, y, &amp, &EbConfig::default())?.result,
        SolverArg::Lasso => lasso_cv_fit(&prep.train, y, 5, 20, &LassoConfig::default(), seed)?.0,
        SolverArg::Pseudoinverse => pseudoinverse_solve(&prep.train, y)?,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bayes(args) => {
            let spec = resolve_spec(ExperimentKind::Bayes, &args)?;
            let report = run_bayes_experiment(&spec)?;
            print_json(&report.summary, None)?;
        }
        Command::Eb(args) => {
            let spec = resolve_spec(ExperimentKind::EmpiricalBayes, &args)?;
            let report = run_eb_experiment(&spec)?;
            print_json(&report.rates, None)?;
        }
        Command::Spectrum { args, keep_all_svs } => {
            let mut spec = resolve_spec(ExperimentKind::Spectrum, &args)?;
            spec.keep_all_svs |= keep_all_svs;
            let report = run_spectrum_experiment(&spec)?;
            for r in &report.rows {
                println!(
                    "M={:<6} N={:<4} L={:<5} sigma1^2 empirical={:.4} predicted={:.4}",
                    r.m, r.n, r.l, r.sigma1_sq_empirical, r.sigma1_sq_predicted
                );
            }
        }
        Command::Expand {
            input,
            output,
            normalize,
        } => {
            let x = FeatureMatrix::new(read_matrix(&input)?)?;
            let mut design = expand_quadratic(&x)?;
            if normalize {
                design = normalize_columns(&design)?;
            }
            write_matrix(&output, design.data())?;
        }
        Command::Solve {
            dataset,
            solver,
            out,
            seed,
            priors,
        } => {
            let result = solve(&dataset, solver, seed, priors.as_deref())?;
            print_json(&result, out.as_deref())?;
        }
        Command::Generate {
            family,
            n,
            m,
            k_test,
            seed,
            out,
        } => {
            let spec = match family {
                Family::Bayes => DatasetSpec::Bayes {
                    model: BayesModelSpec::new(n, m, seed),
                    k_test,
                },
                Family::Sinusoid => DatasetSpec::Sinusoid {
                    model: SinusoidSpec::new(n, m, seed),
                    k_test,
                },
            };
            spec.generate()?.save(&out, &spec)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
