use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcs_cli::{analyze, analyze_to, ingest, load_experiment_config, replay_log, simulate, CliError};

#[derive(Parser)]
#[command(name = "mcs", version, about = "Delayed-teleoperation inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run synthetic sessions described by a JSON experiment config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the report tables from a directory of trial-record CSVs.
    Analyze {
        dir: PathBuf,
        /// Write one CSV per table here instead of printing them.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build confidence tables from a `participant_id,level,correct,confidence` dataset.
    Ingest {
        csv: PathBuf,
        /// Defaults to the dataset's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild trial records from an event log and print them as CSV.
    Replay { log: PathBuf },
    /// Serve live sessions over HTTP and websockets.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out } => {
            let mut cfg = load_experiment_config(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let written = simulate(&cfg)?;
            println!(
                "wrote {} sessions to {} ({} summary tables)",
                written.records.len(),
                cfg.output_dir.display(),
                written.summaries.len()
            );
        }
        Command::Analyze { dir, out: Some(out) } => {
            for p in analyze_to(&dir, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Analyze { dir, out: None } => {
            for t in analyze(&dir)? {
                println!("# {}\n{}", t.name, t.csv);
            }
        }
        Command::Ingest { csv, out } => {
            let out = out.unwrap_or_else(|| csv.parent().map(PathBuf::from).unwrap_or_default());
            let res = ingest(&csv, &out)?;
            print!("{}", res.summary_csv);
            for p in res.written {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Replay { log } => print!("{}", replay_log(&log)?),
        Command::Serve { addr } => {
            let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: PathBuf::new(), source })?;
            eprintln!("listening on {addr}");
            rt.block_on(mcs_service::serve(addr))
                .map_err(|source| CliError::Io { path: PathBuf::from(addr.to_string()), source })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
