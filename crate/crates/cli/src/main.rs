use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collective_mts::harness::{run_and_write, sweep, to_csv, verify_file, Axis, CellStatus, RunConfig};
use collective_mts::Error;

#[derive(Parser)]
#[command(name = "cmts", version, about = "Run, verify and sweep discretized metrical task system strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trace and report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute every certificate of a trace file.
    Verify {
        trace: PathBuf,
        /// Also run the exhaustive necessary-condition scan and reselection.
        #[arg(long)]
        necessary: bool,
    },
    /// Run a template over a grid of parameters.
    Sweep {
        #[arg(long)]
        template: PathBuf,
        /// `name=v1,v2` or `name=a..b`; substitutes `{name}` in the template.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<bool, Error> {
    match command {
        Command::Run { config } => {
            let cfg = RunConfig::read(&config)?;
            let outcome = run_and_write(&cfg)?;
            if cfg.output.report.is_none() {
                print!("{}", outcome.report_json);
            }
            let c = &outcome.report.certificates;
            eprintln!(
                "{} steps, {} certificate failure(s); cost x = {:.6}, OPT = {:.6}",
                outcome.report.steps,
                c.failures(),
                outcome.report.x.total,
                outcome.report.opt
            );
            Ok(outcome.report.passed)
        }
        Command::Verify { trace, necessary } => {
            let report = verify_file(&trace, necessary)?;
            println!("{report}");
            Ok(report.passed)
        }
        Command::Sweep { template, axes, out } => {
            let text = std::fs::read_to_string(&template).map_err(|e| Error::Config(format!("{}: {e}", template.display())))?;
            let axes = axes.iter().map(|a| a.parse()).collect::<Result<Vec<Axis>, _>>()?;
            let rows = sweep(&text, &axes);
            let csv = to_csv(&axes, &rows)?;
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
                None => print!("{csv}"),
            }
            let errors = rows.iter().filter(|r| matches!(r.status, CellStatus::Error(_))).count();
            let failed = rows.iter().filter(|r| matches!(r.status, CellStatus::Fail { .. })).count();
            eprintln!("{} cells: {failed} with certificate failures, {errors} errors", rows.len());
            Ok(failed == 0 && errors == 0)
        }
    }
}
