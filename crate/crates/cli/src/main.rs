//! Command-line entry point.
//!
//! `gravitensor` resolves a run configuration from built-in defaults, an
//! optional TOML file, and command-line flags, executes the requested
//! sections, and emits the result as a deterministic text or JSON report.
//! The process exits zero exactly when every gated check passes.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gravitensor_cli::config::{parse_axes, CaseName, ConfigLayer, RunConfig};
use gravitensor_cli::report::Document;
use gravitensor_cli::{cases, convergence, deviations, gauge, oracle, suite};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "gravitensor",
    version,
    about = "Verification harness for the gravitensor tensor-calculus engine",
    long_about = "Builds a named field configuration on a periodic grid, runs the \
                  identity-check suite, convergence studies, derivative oracles, and the \
                  gauge-deformation experiment, and reports every residual against its \
                  tolerance gate. Without a subcommand, runs `verify`."
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// TOML config file; flags override its settings
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Field configuration to run
    #[arg(long, global = true, value_enum)]
    case: Option<CaseName>,

    /// Points per active grid axis
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Finite-difference stencil order, 2 or 4
    #[arg(long, global = true)]
    order: Option<usize>,

    /// Metric perturbation amplitude
    #[arg(long, global = true)]
    eps: Option<f64>,

    /// Matter field mass
    #[arg(long, global = true)]
    mass: Option<f64>,

    /// Seed for generated fields and oracle sample points
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Grid sizes for convergence studies, comma separated, each double the
    /// previous
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<usize>>,

    /// Axes mask, one character per axis: 1 active, 0 degenerate
    #[arg(long, global = true, value_name = "MASK")]
    axes: Option<String>,

    /// Sample points per pointwise derivative oracle
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Drag amplitudes for the gauge experiment, comma separated, strictly
    /// decreasing
    #[arg(long, global = true, value_delimiter = ',')]
    gauge_eps: Option<Vec<f64>>,

    /// Multiplier applied to every tolerance gate
    #[arg(long, global = true)]
    tolerance_scale: Option<f64>,

    /// Also write the JSON report to this path
    #[arg(long, global = true, value_name = "PATH")]
    report: Option<PathBuf>,

    /// Stdout format
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Free-form label copied verbatim into the report
    #[arg(long, global = true)]
    stamp: Option<String>,

    /// Print the table of arbitrated formula readings and exit
    #[arg(long)]
    deviations: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run every identity check at one grid size; the gauge case also runs
    /// its deformation experiment
    Verify,
    /// Measure convergence orders of the truncation-limited checks across
    /// grid refinements
    Convergence,
    /// Rerun the pointwise derivative oracles against the engine kernels
    Oracle,
    /// Run all sections: checks, convergence, oracles, and the gauge
    /// experiment where applicable
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Convergence => "convergence",
            Self::Oracle => "oracle",
            Self::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Text,
    Json,
}

impl Cli {
    fn flag_layer(&self) -> Result<ConfigLayer> {
        let axes = match &self.axes {
            Some(mask) => Some(parse_axes(mask)?),
            None => None,
        };
        Ok(ConfigLayer {
            case: self.case,
            n: self.n,
            order: self.order,
            eps: self.eps,
            mass: self.mass,
            seed: self.seed,
            levels: self.levels.clone(),
            axes,
            samples: self.samples,
            gauge_eps: self.gauge_eps.clone(),
            tolerance_scale: self.tolerance_scale,
        })
    }

    fn file_layer(&self) -> Result<ConfigLayer> {
        match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("read config file {}", path.display()))?;
                ConfigLayer::from_toml(&text)
                    .with_context(|| format!("parse config file {}", path.display()))
            }
            None => Ok(ConfigLayer::default()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    if cli.deviations {
        print!("{}", deviations::render());
        return Ok(true);
    }
    let cfg = RunConfig::resolve(cli.file_layer()?, cli.flag_layer()?)?;
    let command = cli.command.unwrap_or(Command::Verify);
    let mut doc = Document::new(command.name(), &cfg, cli.stamp.clone());

    match command {
        Command::Verify => {
            let outcome = suite::run(&cfg)?;
            doc.checks = outcome.checks;
            doc.diagnostics = outcome.diagnostics;
            if cfg.case == CaseName::GaugeExperiment {
                doc.gauge = Some(gauge::run(&cfg)?);
            }
        }
        Command::Convergence => {
            doc.convergence = convergence::study(&cfg)?;
        }
        Command::Oracle => {
            doc.probes = oracle::run(&cfg)?;
        }
        Command::Report => {
            let mut systems = cases::build(&cfg)?;
            let outcome = suite::collect(&cfg, &systems)?;
            doc.checks = outcome.checks;
            doc.diagnostics = outcome.diagnostics;
            doc.convergence = convergence::study(&cfg)?;
            doc.probes = oracle::probe(&cfg, &mut systems)?;
            if cfg.case == CaseName::GaugeExperiment {
                doc.gauge = Some(gauge::measure(&cfg, &systems)?);
            }
        }
    }

    doc.seal();
    if let Some(path) = &cli.report {
        std::fs::write(path, doc.to_json())
            .with_context(|| format!("write report {}", path.display()))?;
    }
    match cli.format {
        Format::Text => print!("{}", doc.to_text()),
        Format::Json => print!("{}", doc.to_json()),
    }
    Ok(doc.pass)
}
