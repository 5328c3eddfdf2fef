use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use jumpsmooth::parallel::with_workers;
use jumpsmooth_cli::{bundled, load_bytes, report, Diagnostic, Experiment, Format};

/// Exit status when the config itself is rejected.
const EXIT_INVALID: u8 = 2;
const DEFAULT_OUT: &str = "jumpsmooth-out";

#[derive(Parser)]
#[command(name = "jumpsmooth", version, about = "Run smoothness checks for compound Poisson functionals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every check in a config and write the report.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check a config without sampling; prints one line per problem.
    Validate { config: PathBuf },
    /// Run a bundled config by name (`--list` to show them).
    Demo {
        #[arg(required_unless_present = "list")]
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Worker threads for the estimators (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides `[output] dir` in the config.
    #[arg(long, env = "JUMPSMOOTH_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Run checks concurrently; report order stays the declaration order.
    #[arg(long)]
    parallel_checks: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, opts } => {
            let bytes = std::fs::read(&config).with_context(|| format!("reading {}", config.display()))?;
            execute(&bytes, &config.display().to_string(), &opts)
        }
        Command::Validate { config } => {
            let bytes = std::fs::read(&config).with_context(|| format!("reading {}", config.display()))?;
            match load_bytes(&bytes) {
                Ok(exp) => {
                    println!("{}: ok ({} checks)", config.display(), exp.checks.len());
                    Ok(ExitCode::SUCCESS)
                }
                Err(diags) => Ok(report_diagnostics(&config.display().to_string(), &diags)),
            }
        }
        Command::Demo { list: true, .. } => {
            for n in bundled::names() {
                println!("{n}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Demo { name, opts, .. } => {
            let name = name.unwrap_or_default();
            let src = bundled::get(&name).with_context(|| {
                format!("no bundled config `{name}`; available: {}", bundled::names().collect::<Vec<_>>().join(", "))
            })?;
            execute(src.as_bytes(), &format!("{name}.cfg"), &opts)
        }
    }
}

fn report_diagnostics(label: &str, diags: &[Diagnostic]) -> ExitCode {
    for d in diags {
        eprintln!("{label}: {d}");
    }
    eprintln!("{label}: {} problem(s)", diags.len());
    ExitCode::from(EXIT_INVALID)
}

fn output_dir(opts: &RunOpts, exp: &Experiment) -> PathBuf {
    opts.out.clone().or_else(|| exp.output_dir.clone()).unwrap_or_else(|| Path::new(DEFAULT_OUT).to_path_buf())
}

fn execute(bytes: &[u8], label: &str, opts: &RunOpts) -> anyhow::Result<ExitCode> {
    let exp = match load_bytes(bytes) {
        Ok(exp) => exp,
        Err(diags) => return Ok(report_diagnostics(label, &diags)),
    };
    let run = || jumpsmooth_cli::run(&exp, opts.parallel_checks);
    let out = match opts.workers {
        Some(w) => with_workers(w, run),
        None => run(),
    };
    let dir = output_dir(opts, &exp);
    let written = report::write_all(&dir, opts.format, &out.report, &out.tables)?;
    for (r, (_, secs)) in out.report.records.iter().zip(&out.timings) {
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        let value = r.value.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        let bound = r.bound.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        eprintln!("{verdict} {:<28} value={value} bound={bound} ({secs:.2}s)", r.check);
        if let Some(e) = &r.error {
            eprintln!("     error: {e}");
        }
    }
    let m = &out.report.manifest;
    eprintln!("{}/{} checks passed; wrote {} file(s) to {}", m.passed, m.checks, written.len(), dir.display());
    Ok(if m.all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
