use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use neumann_pat::pipeline::{self, FormulaKind, RunConfig};
use neumann_pat::{Error, Result};

/// Boundary-trace simulation and back-projection reconstruction.
#[derive(Parser)]
#[command(name = "npat", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid.n=101`. Repeatable.
    #[arg(long = "set", short = 's', value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (same as `--set output.dir=...`).
    #[arg(long, short, global = true)]
    out: Option<String>,
    /// Grid samples per axis.
    #[arg(long, short = 'n', global = true)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Rasterize the configured phantom.
    Phantom,
    /// Simulate Dirichlet, Neumann and mixed traces.
    Forward,
    /// Add Gaussian noise to a stored trace.
    Noise {
        trace: PathBuf,
        #[arg(long)]
        percent: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct from a stored trace and report metrics.
    Reconstruct {
        trace: PathBuf,
        /// neumann, mixed or dirichlet_ubp; defaults to the config.
        #[arg(long)]
        formula: Option<String>,
        /// Allow a formula that does not match the trace kind.
        #[arg(long)]
        cross: bool,
    },
    /// Kernel tables and reconstruction-residual / identity checks.
    Kernel,
    /// Full experiment matrix: data kind x noise level x formula.
    Matrix,
    /// Metrics of one field file against a reference.
    Compare { candidate: PathBuf, reference: PathBuf },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let base = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut overrides = Vec::new();
    if let Some(n) = c.n {
        overrides.push(format!("grid.n={n}"));
    }
    if let Some(o) = &c.out {
        overrides.push(format!("output.dir={}", toml_string(o)));
    }
    overrides.extend(c.overrides.iter().cloned());
    base.with_overrides(&overrides)
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn list(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn formula_arg(s: Option<&str>) -> Result<Option<FormulaKind>> {
    s.map(|s| {
        FormulaKind::parse(s).ok_or_else(|| Error::Config {
            location: "--formula".into(),
            message: format!("unknown formula `{s}` (neumann, mixed, dirichlet_ubp)"),
        })
    })
    .transpose()
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli.common)?;
    match cli.verb {
        Verb::Phantom => list(&pipeline::cmd_phantom(&cfg)?),
        Verb::Forward => list(&pipeline::cmd_forward(&cfg)?),
        Verb::Noise { trace, percent, seed } => list(&[pipeline::cmd_noise(&cfg, &trace, percent, seed)?]),
        Verb::Reconstruct { trace, formula, cross } => {
            let out = pipeline::cmd_reconstruct(&cfg, &trace, formula_arg(formula.as_deref())?, cross)?;
            list(&out.files);
            print_json(&out.metrics)?;
        }
        Verb::Kernel => {
            let (report, files) = pipeline::cmd_kernel(&cfg)?;
            list(&files);
            eprintln!(
                "{}: kernel band max {:.3e} ({})",
                report.domain,
                report.kernel_band_max,
                if report.vanishing { "vanishing" } else { "non-vanishing" }
            );
        }
        Verb::Matrix => {
            let out = pipeline::cmd_matrix(&cfg)?;
            println!("{}", Path::new(&cfg.output.dir).join("matrix/summary.csv").display());
            let failed = out.failed();
            if failed > 0 {
                for c in out.cells.iter().filter(|c| c.error.is_some()) {
                    eprintln!("cell {} failed: {}", c.stem, c.error.as_deref().unwrap_or(""));
                }
                eprintln!("{failed} of {} cells failed", out.cells.len());
                return Ok(ExitCode::from(4));
            }
        }
        Verb::Compare { candidate, reference } => print_json(&pipeline::cmd_compare(&candidate, &reference)?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("npat: {e}");
            ExitCode::from(pipeline::exit_code(&e))
        }
    }
}
