use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use revtogether::gateway::{Gateway, ProviderConfig, ProviderKind};
use revtogether::script::{cmd_replay, cmd_run_script, CliError};
use revtogether::store::ReplayReport;
use revtogether_server::{serve, shutdown_signal, ServeConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "revtogether", version, about = "Story revision workbench with persona feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service (configured through REVT_* variables).
    Serve,
    /// Apply a script to a story and write the session to a directory.
    Run {
        #[arg(long)]
        story: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Provider::Mock)]
        provider: Provider,
    },
    /// Rebuild a saved session from its event log and compare with the snapshot.
    Replay { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Mock,
    Remote,
}

fn gateway_for(provider: Provider) -> Result<Gateway, CliError> {
    let mut config = ProviderConfig::from_env().map_err(|e| CliError::Config(e.to_string()))?;
    config.kind = match provider {
        Provider::Mock => ProviderKind::Mock,
        Provider::Remote => ProviderKind::Remote,
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Gateway::from_config(&config).map_err(|e| CliError::Config(e.to_string()))
}

fn run(story: PathBuf, script: PathBuf, out: PathBuf, provider: Provider) -> Result<(), CliError> {
    let gateway = gateway_for(provider)?;
    let run = cmd_run_script(&story, &script, &out, &gateway)?;
    print!("{}", run.transcript);
    println!("wrote {}", out.display());
    Ok(())
}

fn replay(dir: PathBuf) -> Result<ExitCode, CliError> {
    let (session, report) = cmd_replay(&dir)?;
    match report {
        ReplayReport::Identical { events } => {
            println!("identical: {events} events, version {}", session.document.version);
            Ok(ExitCode::SUCCESS)
        }
        ReplayReport::NoSnapshot { events } => {
            println!("replayed {events} events (no snapshot to compare), version {}", session.document.version);
            Ok(ExitCode::SUCCESS)
        }
        ReplayReport::Diverged { seq, reason } => {
            println!("diverged at seq {seq}: {reason}");
            Ok(ExitCode::from(2))
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve => {
            let config = match ServeConfig::from_env() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
            return match runtime.block_on(serve(config, shutdown_signal())) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
        Command::Run { story, script, out, provider } => run(story, script, out, provider).map(|_| ExitCode::SUCCESS),
        Command::Replay { dir } => replay(dir),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code())
    })
}
