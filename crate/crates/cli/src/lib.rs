//! Command-line front end: geodesic traces, formulation comparisons, fans,
//! wavefront checks, refraction and frame batteries over the built-in
//! metrics, plus the acceptance battery. Everything is scenario-driven and
//! deterministic; no environment variables are consulted.

pub mod commands;
pub mod emit;
pub mod scenario;
pub mod validation;

use std::fmt;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use commands::{CommandOutcome, Overrides};

/// Failure classes carry their exit code: a failed validation is 1, bad
/// usage or config is 2, a computation that could not finish is 3.
#[derive(Debug)]
pub enum CliError {
    Check(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rhotrace_core::Error> for CliError {
    fn from(e: rhotrace_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "rhotrace",
    version,
    about = "Geodesic tracing and wavefront checks over pluggable metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the scenario-driven subcommands.
#[derive(Args)]
struct ScenarioArgs {
    /// Scenario config file (TOML: flat keys plus [params], [fan], [outputs])
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override the integration step from the config
    #[arg(long, value_name = "H")]
    h: Option<f64>,
    /// Override the formulation: alpha_form, christoffel or both
    #[arg(long, value_name = "NAME")]
    formulation: Option<String>,
    /// Write ray samples to this CSV file (overrides the config)
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Write a figure to this SVG file (overrides the config)
    #[arg(long, value_name = "FILE")]
    svg: Option<PathBuf>,
    /// Also write the run report to this file
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

impl ScenarioArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            h: self.h,
            formulation: self.formulation.clone(),
            csv: self.csv.clone(),
            svg: self.svg.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Trace a geodesic under one or both formulations
    Trace {
        #[command(flatten)]
        args: ScenarioArgs,
    },
    /// Trace both formulations and measure their deviation
    Compare {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Add a step-halving convergence study to the report
        #[arg(long)]
        study: bool,
    },
    /// Trace a fan of geodesics from the scenario start
    Fan {
        #[command(flatten)]
        args: ScenarioArgs,
    },
    /// Fan plus wavefront checks between two arclength levels
    Wavefront {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Inner wavefront arclength
        #[arg(long, value_name = "S")]
        s1: f64,
        /// Outer wavefront arclength
        #[arg(long, value_name = "S")]
        s2: f64,
        /// Extra level-set arclengths for the figure, comma separated
        #[arg(long, value_name = "S,S,..")]
        levels: Option<String>,
        /// Draw the construction discs seeded on the inner wavefront
        #[arg(long)]
        discs: bool,
    },
    /// Paired-probe turning-rate estimates at the scenario start
    Pairs {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Probe separation across the ray
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
        /// Probe advance along the ray
        #[arg(long, default_value_t = 1e-3)]
        dr: f64,
        /// How many times to halve both probe scales
        #[arg(long, default_value_t = 3)]
        halvings: usize,
    },
    /// Refract through a smooth index interface and compare the closed form
    Snell {
        /// Index on the incoming side
        #[arg(long, default_value_t = 1.0)]
        n1: f64,
        /// Index on the outgoing side
        #[arg(long, default_value_t = 1.5)]
        n2: f64,
        /// Incidence angle from the interface normal, degrees
        #[arg(long = "angle-deg", default_value_t = 30.0)]
        angle_deg: f64,
        /// Blend width of the smoothed interface
        #[arg(long, default_value_t = 0.01)]
        width: f64,
        /// Integration step
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        /// alpha_form, christoffel or both
        #[arg(long, default_value = "both")]
        formulation: String,
        /// Pass tolerance on the refracted angle, degrees
        #[arg(long = "tol-deg", default_value_t = 0.1)]
        tol_deg: f64,
        /// Also write the run report to this file
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Randomized frame-algebra identity battery
    Frames {
        /// Seed for the random metric battery
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// How many random metrics to draw
        #[arg(long, default_value_t = 100)]
        metrics: usize,
        /// Also write the run report to this file
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Run the acceptance battery: one PASS/FAIL line per criterion
    Validate {
        /// Seed for the randomized criteria
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write the run report to this file
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
}

/// Parses argv, runs the subcommand, prints the report to stdout and maps
/// failures onto the documented exit codes.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let benign = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if benign { 0 } else { 2 };
        }
    };
    match dispatch(cli) {
        Ok(out) => {
            print!("{}", out.report.to_text());
            match out.failed_check {
                None => 0,
                Some(why) => {
                    eprintln!("check failed: {why}");
                    1
                }
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<CommandOutcome, CliError> {
    match cli.command {
        Command::Trace { args } => {
            commands::trace_command(&args.config, &args.overrides(), args.report.as_deref())
        }
        Command::Compare { args, study } => {
            commands::compare_command(&args.config, &args.overrides(), study, args.report.as_deref())
        }
        Command::Fan { args } => {
            commands::fan_command(&args.config, &args.overrides(), args.report.as_deref())
        }
        Command::Wavefront {
            args,
            s1,
            s2,
            levels,
            discs,
        } => {
            let extra = parse_levels(levels.as_deref())?;
            commands::wavefront_command(
                &args.config,
                &args.overrides(),
                s1,
                s2,
                &extra,
                discs,
                args.report.as_deref(),
            )
        }
        Command::Pairs {
            args,
            lambda,
            dr,
            halvings,
        } => commands::pairs_command(
            &args.config,
            &args.overrides(),
            lambda,
            dr,
            halvings,
            args.report.as_deref(),
        ),
        Command::Snell {
            n1,
            n2,
            angle_deg,
            width,
            h,
            formulation,
            tol_deg,
            report,
        } => commands::snell_command(
            n1,
            n2,
            angle_deg,
            width,
            h,
            &formulation,
            tol_deg,
            report.as_deref(),
        ),
        Command::Frames {
            seed,
            metrics,
            report,
        } => commands::frames_command(seed, metrics, report.as_deref()),
        Command::Validate { seed, report } => commands::validate_command(seed, report.as_deref()),
    }
}

fn parse_levels(spec: Option<&str>) -> Result<Vec<f64>, CliError> {
    let Some(spec) = spec else {
        return Ok(Vec::new());
    };
    spec.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "flag --levels: expected comma-separated non-negative numbers, got `{tok}`"
                    ))
                })
        })
        .collect()
}
