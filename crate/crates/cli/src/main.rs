mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use refine_core::Error;

use args::{Cli, Command};

/// Worker-count cap read at startup.
const THREADS_ENV: &str = "REFINE_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    /// Some cluster was passed through unchanged.
    Degraded,
    /// `validate` ran but a check failed.
    ChecksFailed,
}

impl CliError {
    pub fn usage(e: Error) -> CliError {
        CliError::Usage(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::InvalidParameter(_) | Error::InvalidScale(_) | Error::EmptyGrid => 2,
                _ => 3,
            },
            CliError::ChecksFailed => 1,
            CliError::Degraded => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::Degraded => "some clusters were passed through unchanged (use --allow-degraded to accept)".into(),
            CliError::ChecksFailed => "validation checks failed".into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let json = cli.json;
    let result = init_threads().and_then(|()| match cli.command {
        Command::Rewire(a) => commands::rewire(a, json),
        Command::Homophily(a) => commands::homophily(a, json),
        Command::Reference(a) => commands::reference(a, json),
        Command::Validate(a) => commands::validate_cmd(a, json),
        Command::Synth(a) => commands::synth_cmd(a, json),
        Command::Sweep(a) => commands::sweep(a, json),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            log::debug!("exiting with {code}: {e:?}");
            eprintln!("error: {}", e.message());
            if json && !matches!(e, CliError::Degraded | CliError::ChecksFailed) {
                let body = serde_json::json!({ "error": e.message(), "exit_code": code });
                let _ = writeln!(std::io::stdout(), "{body}");
            }
            ExitCode::from(code)
        }
    }
}
