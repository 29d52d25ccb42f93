mod commands;
mod error;
mod scene;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellavg::asymptotics::Proposition;
use cellavg::lattice::BoundaryRule;
use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CliError;
use crate::scene::{OutputFormat, Scene, ScheduleTag};

#[derive(Debug, Parser)]
#[command(name = "cellavg", version, about = "Discrete and cell-averaged crystal energies from scene files")]
struct Cli {
    /// Scene file (JSON).
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Gauss–Legendre order for the interface path integrals.
    #[arg(long, global = true)]
    quad_order: Option<usize>,
    #[arg(long, global = true, value_enum)]
    boundary: Option<BoundaryArg>,
    /// Switches the schedule to ε = 1/(k + θ).
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Closed,
    #[value(alias = "half-open")]
    Halfopen,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PropositionArg {
    #[value(name = "P1", alias = "p1")]
    P1,
    #[value(name = "P2", alias = "p2")]
    P2,
    #[value(name = "P3", alias = "p3")]
    P3,
    #[value(name = "P4", alias = "p4")]
    P4,
    #[value(name = "P5", alias = "p5")]
    P5,
}

impl From<PropositionArg> for Proposition {
    fn from(p: PropositionArg) -> Self {
        match p {
            PropositionArg::P1 => Proposition::P1,
            PropositionArg::P2 => Proposition::P2,
            PropositionArg::P3 => Proposition::P3,
            PropositionArg::P4 => Proposition::P4,
            PropositionArg::P5 => Proposition::P5,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bulk, surface and interface densities.
    Density,
    /// Energies along the ε-schedule against their predicted expansion.
    Expand {
        #[arg(long, value_enum)]
        proposition: PropositionArg,
        /// Also write the fitted coefficients as JSON here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Surface and interface gaps along a Miller-vector sequence.
    Miller {
        #[arg(long, default_value_t = 40)]
        j_max: u32,
    },
    /// Lattice-point remainders along the ε-schedule.
    Remainder,
    /// Brute-force translation averages against the exact cell average.
    Oracle {
        #[arg(long, default_value_t = 32)]
        grid_n: usize,
        /// Scale to test; defaults to the first ε of the schedule.
        #[arg(long)]
        eps: Option<f64>,
    },
}

fn apply_overrides(cli: &Cli, scene: &mut Scene) -> Result<(), CliError> {
    if let Some(f) = cli.format {
        scene.format = Some(f);
    }
    if let Some(t) = cli.threads {
        scene.threads = Some(t);
    }
    if let Some(q) = cli.quad_order {
        scene.quadrature.gauss_order = q;
    }
    if let Some(b) = cli.boundary {
        scene.boundary_rule = match b {
            BoundaryArg::Closed => BoundaryRule::Closed,
            BoundaryArg::Halfopen => BoundaryRule::HalfOpen,
        };
    }
    if let Some(theta) = cli.theta {
        scene.schedule.kind = ScheduleTag::Offset;
        scene.schedule.theta = Some(theta);
    }
    if scene.threads == Some(0) {
        return Err(CliError::Validation("threads must be at least 1".into()));
    }
    if scene.quadrature.gauss_order == 0 {
        return Err(CliError::Validation("quadrature order must be at least 1".into()));
    }
    Ok(())
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Output(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .scene
        .as_deref()
        .ok_or_else(|| CliError::Validation("--scene is required".into()))?;
    let mut scene = Scene::load(path)?;
    apply_overrides(cli, &mut scene)?;
    let resolved = scene.resolve()?;
    if let Some(n) = scene.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    let report = match &cli.command {
        Command::Density => commands::density(&scene, &resolved)?,
        Command::Expand { proposition, summary } => {
            let (report, fitted) = commands::expand(&scene, &resolved, (*proposition).into())?;
            if let Some(p) = summary {
                let mut bytes = serde_json::to_vec_pretty(&fitted).map_err(|e| CliError::Output(e.to_string()))?;
                bytes.push(b'\n');
                write_bytes(Some(p), &bytes)?;
            }
            report
        }
        Command::Miller { j_max } => commands::miller(&scene, &resolved, *j_max)?,
        Command::Remainder => commands::remainder(&scene, &resolved)?,
        Command::Oracle { grid_n, eps } => commands::oracle(&scene, &resolved, *grid_n, *eps)?,
    };
    let bytes = match scene.format.unwrap_or(OutputFormat::Csv) {
        OutputFormat::Csv => report.to_csv()?,
        OutputFormat::Json => report.to_json()?,
    };
    write_bytes(cli.out.as_deref(), &bytes)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
