mod output;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ilg_core::driver::{Termination, DEFAULT_MAX_ELEMENTS};
use ilg_core::{make_lshape_initial, run_from, singular_problem, smooth_problem, verify};
use ilg_core::{IlgConfig, ManufacturedProblem, RunRecord, SchemeSpec};

use crate::svg::{Marker, Plot, Scale, Series};

#[derive(Parser)]
#[command(
    name = "ilg",
    version,
    about = "Adaptive iterative linearized Galerkin FEM on the L-shape"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one adaptive computation and write record.csv and plots.
    Run {
        #[arg(long, value_enum)]
        problem: ProblemArg,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// Damping; defaults to 0.85 (smooth) / 0.5 (singular) for
        /// Zarantonello and 1 for Newton. Ignored by Kačanov.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ELEMENTS)]
        max_elements: usize,
        /// Stop once the estimator drops below this value.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Run a preset with all three schemes.
    Experiment {
        #[arg(long, value_enum)]
        name: Preset,
        /// Output directory; defaults to out/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_ELEMENTS)]
        max_elements: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the verification suite; exits with status 1 if any check fails.
    Verify {
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Smooth,
    Singular,
}

impl ProblemArg {
    fn problem(self) -> ManufacturedProblem {
        match self {
            Self::Smooth => smooth_problem(),
            Self::Singular => singular_problem(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Zarantonello,
    Kacanov,
    Newton,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig1a,
    Fig1b,
    Fig2a,
    Fig2b,
    Fig3a,
    Fig3b,
    Fig4a,
    Fig4b,
}

impl Preset {
    /// (problem, λ, θ)
    fn parameters(self) -> (ManufacturedProblem, f64, f64) {
        use Preset::*;
        let prob = match self {
            Fig1a | Fig1b | Fig2a | Fig2b => smooth_problem(),
            _ => singular_problem(),
        };
        let (lambda, theta) = match self {
            Fig1a | Fig3a => (0.5, 0.5),
            Fig1b | Fig3b => (0.5, 0.0),
            Fig2a | Fig4a => (0.1, 0.5),
            Fig2b | Fig4b => (0.001, 0.5),
        };
        (prob, lambda, theta)
    }

    fn name(self) -> String {
        self.to_possible_value()
            .expect("no skipped variants")
            .get_name()
            .to_string()
    }
}

fn scheme_spec(arg: SchemeArg, delta: Option<f64>, prob: &ManufacturedProblem) -> SchemeSpec {
    match arg {
        SchemeArg::Zarantonello => SchemeSpec::Zarantonello {
            delta: delta.unwrap_or_else(|| verify::zarantonello_delta(prob)),
        },
        SchemeArg::Kacanov => SchemeSpec::Kacanov,
        SchemeArg::Newton => SchemeSpec::Newton {
            delta: delta.unwrap_or(1.0),
        },
    }
}

fn execute(cfg: &IlgConfig, prob: &ManufacturedProblem, quiet: bool) -> Result<RunRecord> {
    let rec = run_from(cfg, prob, make_lshape_initial(), |l, _, _| {
        if !quiet {
            eprintln!(
                "{} {}: level {:>3}  |T| = {:>7}  #It = {:>3}  eta = {:.4e}  err = {:.4e}",
                prob.name, cfg.scheme, l.level, l.n_elements, l.iterations, l.estimator, l.h1_error
            );
        }
    })
    .with_context(|| format!("{} run with {}", prob.name, cfg.scheme))?;
    if !quiet {
        let why = match rec.termination {
            Termination::Tolerance => "estimator below tolerance",
            Termination::ElementBudget => "element budget reached",
            Termination::ExactSolution => "estimator vanished",
        };
        eprintln!(
            "{} {}: stopped after {} levels ({why})",
            prob.name,
            cfg.scheme,
            rec.levels.len()
        );
    }
    Ok(rec)
}

fn convergence_plot(title: &str, runs: &[RunRecord]) -> Plot {
    let markers = [Marker::Circle, Marker::Square, Marker::Triangle];
    let mut series = Vec::new();
    for (i, rec) in runs.iter().enumerate() {
        let name = rec.config.scheme.name();
        series.push(Series {
            label: format!("{name} eta"),
            points: rec
                .levels
                .iter()
                .map(|l| (l.n_elements as f64, l.estimator))
                .collect(),
            marker: markers[i % 3],
            dashed: false,
        });
        series.push(Series {
            label: format!("{name} error"),
            points: rec
                .levels
                .iter()
                .map(|l| (l.n_elements as f64, l.h1_error))
                .collect(),
            marker: markers[i % 3],
            dashed: true,
        });
    }
    Plot {
        title: title.into(),
        x_label: "number of elements |T|".into(),
        y_label: "estimator / error".into(),
        y_scale: Scale::Log,
        series,
        reference_slope: Some(-0.5),
    }
}

fn iterations_plot(title: &str, runs: &[RunRecord]) -> Plot {
    let markers = [Marker::Circle, Marker::Square, Marker::Triangle];
    Plot {
        title: title.into(),
        x_label: "number of elements |T|".into(),
        y_label: "#It".into(),
        y_scale: Scale::Linear,
        series: runs
            .iter()
            .enumerate()
            .map(|(i, rec)| Series {
                label: rec.config.scheme.name().into(),
                points: rec
                    .levels
                    .iter()
                    .map(|l| (l.n_elements as f64, l.iterations as f64))
                    .collect(),
                marker: markers[i % 3],
                dashed: false,
            })
            .collect(),
        reference_slope: None,
    }
}

fn write_plots(dir: &Path, title: &str, runs: &[RunRecord]) -> Result<()> {
    output::write_atomic(
        &dir.join("convergence.svg"),
        convergence_plot(title, runs).render().as_bytes(),
    )?;
    output::write_atomic(
        &dir.join("iterations.svg"),
        iterations_plot(title, runs).render().as_bytes(),
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ilg_core::Error>()
                .is_some_and(|e| matches!(e, ilg_core::Error::InvalidConfig(_)))
            {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Returns `Ok(false)` when verification checks fail.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run {
            problem,
            scheme,
            delta,
            lambda,
            theta,
            max_elements,
            tolerance,
            out,
            quiet,
        } => {
            let prob = problem.problem();
            let cfg = IlgConfig::new(scheme_spec(scheme, delta, &prob), lambda, theta)
                .with_max_elements(max_elements)
                .with_tolerance(tolerance);
            cfg.validate()?;
            let rec = execute(&cfg, &prob, quiet)?;
            output::ensure_dir(&out)?;
            output::write_atomic(&out.join("record.csv"), rec.to_csv().as_bytes())?;
            let title = format!(
                "{} problem, {}, lambda = {lambda}, theta = {theta}",
                prob.name, cfg.scheme
            );
            write_plots(&out, &title, std::slice::from_ref(&rec))?;
            Ok(true)
        }
        Command::Experiment {
            name,
            out,
            max_elements,
            quiet,
        } => {
            let (prob, lambda, theta) = name.parameters();
            let out = out.unwrap_or_else(|| Path::new("out").join(name.name()));
            let mut runs = Vec::new();
            for arg in [
                SchemeArg::Zarantonello,
                SchemeArg::Kacanov,
                SchemeArg::Newton,
            ] {
                let cfg = IlgConfig::new(scheme_spec(arg, None, &prob), lambda, theta)
                    .with_max_elements(max_elements);
                runs.push(execute(&cfg, &prob, quiet)?);
            }
            output::ensure_dir(&out)?;
            for rec in &runs {
                let file = out.join(format!("{}.csv", rec.config.scheme.name()));
                output::write_atomic(&file, rec.to_csv().as_bytes())?;
            }
            let title = format!(
                "{}: {} problem, lambda = {lambda}, theta = {theta}",
                name.name(),
                prob.name
            );
            write_plots(&out, &title, &runs)?;
            Ok(true)
        }
        Command::Verify { quick } => {
            let reports = verify::suite(quick);
            let failed = reports.iter().filter(|r| !r.passed).count();
            for r in &reports {
                println!("{r}");
            }
            println!("{} checks, {failed} failed", reports.len());
            Ok(failed == 0)
        }
    }
}
