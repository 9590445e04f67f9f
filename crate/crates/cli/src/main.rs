use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use hyers_cli::render::render;
use hyers_cli::scenario::{Scenario, PRESETS};
use hyers_cli::{configure_threads, run, write_atomic, CliError, RunReport};
use hyers_core::verify::CHECKS;

#[derive(Parser)]
#[command(name = "hyers", version, about = "Stability certification for approximate generalized derivations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a bundled preset given as `@name`.
    Run {
        scenario: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; overrides the scenario `output`. Without either the
        /// report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record wall time in the report (makes it run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Parse and construct a scenario without running checks.
    Validate { scenario: String },
    /// Print the known check names.
    ListChecks,
    /// Print the bundled presets.
    ListPresets,
    /// Summarize a JSON report.
    Render { report: PathBuf },
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { scenario, seed, out, timing } => {
            let start = Instant::now();
            let (mut sc, base) = Scenario::load(&scenario)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            let built = sc.build(base.as_deref())?;
            let mut report = run(&sc, &built)?;
            let elapsed = start.elapsed().as_secs_f64();
            if timing {
                report.wall_time_seconds = Some(elapsed);
            }
            let json = report.to_json()?;
            match out.or_else(|| sc.output.clone()) {
                Some(path) => {
                    write_atomic(&path, &json)?;
                    print!("{}", render(&report));
                }
                None => print!("{json}"),
            }
            eprintln!("wall time {elapsed:.3} s");
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Validate { scenario } => {
            let (sc, base) = Scenario::load(&scenario)?;
            let built = sc.build(base.as_deref())?;
            println!(
                "ok: {} ({} checks, depth {}, algebra dim {})",
                sc.name,
                sc.checks.len(),
                built.depth,
                built.pair.bimodule().algebra().dim()
            );
            Ok(0)
        }
        Command::ListChecks => {
            for c in CHECKS {
                println!("{c}");
            }
            Ok(0)
        }
        Command::ListPresets => {
            for (name, _) in PRESETS {
                println!("@{name}");
            }
            Ok(0)
        }
        Command::Render { report } => {
            let text = std::fs::read_to_string(&report)
                .map_err(|e| CliError::Parse(format!("{}: {e}", report.display())))?;
            let parsed: RunReport = serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
            print!("{}", render(&parsed));
            Ok(if parsed.passed { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
