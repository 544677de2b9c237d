use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pairloop::exec;
use pairloop::session::{replay_file, server, validate_trace, SessionConfig, TraceError};

#[derive(Parser)]
#[command(name = "pairloop", version, about = "Proactive pair-programming session server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve editing sessions over TCP (newline-delimited JSON).
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 7878)]
        port: u16,
    },
    /// Re-run a recorded trace and print its summary.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        report: Option<Report>,
    },
    /// Check that a trace file is well-formed.
    ValidateTrace { path: PathBuf },
    /// Inspect the bundled programming tasks.
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
}

#[derive(Subcommand)]
enum TasksCommand {
    List,
    Show { id: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Md,
    Csv,
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Serve { config, port } => {
            let config = SessionConfig::load(&config).map_err(|e| e.to_string())?;
            server::serve(config, port).map_err(|e| e.to_string())
        }
        Command::Replay { trace, config, report } => {
            let config = SessionConfig::load(&config).map_err(|e| e.to_string())?;
            let result = replay_file(&trace, &config).map_err(|e| e.to_string())?;
            match report {
                Some(Report::Md) => print!("{}", result.summary.to_markdown()),
                Some(Report::Csv) => print!("{}", result.summary.to_csv()),
                None => println!("{}", serde_json::to_string_pretty(&result.summary).map_err(|e| e.to_string())?),
            }
            Ok(())
        }
        Command::ValidateTrace { path } => match validate_trace(&path) {
            Ok(n) => {
                println!("{}: ok ({n} lines)", path.display());
                Ok(())
            }
            Err(e @ TraceError::Malformed { .. }) => Err(format!("{}: {e}", path.display())),
            Err(e) => Err(e.to_string()),
        },
        Command::Tasks { command: TasksCommand::List } => {
            for t in exec::tasks() {
                println!("{:<12} {}", t.id, t.title());
            }
            Ok(())
        }
        Command::Tasks { command: TasksCommand::Show { id } } => {
            let t = exec::task(&id).map_err(|e| e.to_string())?;
            println!("{}", t.description.trim_end());
            let tests = t.tests().map_err(|e| e.to_string())?;
            println!("\nTests ({}):", tests.len());
            for case in tests {
                println!("  {}", case.name);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
