use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qtraj_cli::commands::resolve_out;
use qtraj_cli::output::OutDir;
use qtraj_cli::{configure_threads, run, CliError, Command, Options, Scenario};

#[derive(Parser)]
#[command(name = "qtraj", version, about = "Trajectory representation of stationary quantum mechanics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot (trajectory only).
    #[arg(long)]
    svg: bool,
    /// Verification suite: qshje, floyd, spin or all (verify only).
    #[arg(long)]
    suite: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one microstate slice and write slice.csv and summary.json.
    Solve(Common),
    /// Floydian time along the slice; writes trajectory.csv.
    Trajectory(Common),
    /// Run verification suites; writes verify.json.
    Verify(Common),
    /// Three-dimensional spin scene and velocity verdict.
    Spin(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, common) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Trajectory(c) => (Command::Trajectory, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Spin(c) => (Command::Spin, c),
    };
    let opts = Options {
        scenario: common.scenario,
        out: common.out,
        svg: common.svg,
        suite: common.suite,
    };
    let result = configure_threads().and_then(|_| run(cmd, &opts));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            for name in &outcome.failed {
                eprintln!("failed check: {name}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(err) => {
            report_error(&err, &opts);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn report_error(err: &CliError, opts: &Options) {
    let doc = err.to_json();
    eprintln!("{doc}");
    let scenario = Scenario::load(&opts.scenario).ok();
    if opts.out.is_some() || scenario.is_some() {
        if let Ok(dir) = OutDir::create(resolve_out(opts, scenario.as_ref())) {
            let _ = dir.write_with("error.json", |w| {
                w.write_all(doc.as_bytes())?;
                w.write_all(b"\n")
            });
        }
    }
}
