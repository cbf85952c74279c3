//! Command-line front end: `train`, `gridsearch`, `ablate` and `synth`.
//!
//! Exit codes: 0 success, 1 usage or contract error, 2 data error, 3 numeric
//! failure. Every failure writes one `handa: error kind=... exit=...` line to
//! standard error before any further detail.

mod args;
mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{CommandFactory, FromArgMatches};

pub use args::{
    AblateArgs, Cli, Command, CommonArgs, DataFormat, EstimatorArg, GridArgs, ScorerArg, SynthArgs,
    TrainArgs, DEFAULT_MODES,
};
pub use commands::{cmd_ablate, cmd_gridsearch, cmd_synth, cmd_train, load_experiment};

use crate::error::{ErrorKind, HandaError};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; carries the message and the usage text to print.
    Usage { msg: String, usage: String },
    Lib(HandaError),
}

impl From<HandaError> for CliError {
    fn from(e: HandaError) -> Self {
        CliError::Lib(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage { msg, .. } => write!(f, "{msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn usage(subcommand: &str, msg: impl Into<String>) -> Self {
        let mut cmd = Cli::command();
        cmd.build();
        let usage = cmd
            .find_subcommand_mut(subcommand)
            .map(|c| c.render_usage().to_string())
            .unwrap_or_else(|| cmd.render_usage().to_string());
        CliError::Usage {
            msg: msg.into(),
            usage,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => EXIT_USAGE,
            CliError::Lib(e) => match e.kind() {
                ErrorKind::Contract => EXIT_USAGE,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numeric => EXIT_NUMERIC,
            },
        }
    }

    fn kind_name(&self) -> &'static str {
        match self.exit_code() {
            EXIT_DATA => "data",
            EXIT_NUMERIC => "numeric",
            _ => "usage",
        }
    }

    /// The single diagnostic line.
    pub fn diagnostic(&self) -> String {
        format!(
            "handa: error kind={} exit={} message={:?}",
            self.kind_name(),
            self.exit_code(),
            self.to_string()
        )
    }

    fn report(&self) {
        eprintln!("{}", self.diagnostic());
        if let CliError::Usage { usage, .. } = self {
            if !usage.is_empty() {
                eprintln!("{usage}");
            }
        }
    }
}

fn toml_to_arg(value: &toml::Value) -> Option<Option<String>> {
    use toml::Value;
    Some(match value {
        Value::Boolean(true) => None,
        Value::Boolean(false) => return None,
        Value::String(s) => Some(s.clone()),
        Value::Integer(i) => Some(i.to_string()),
        Value::Float(f) => Some(f.to_string()),
        Value::Array(items) => Some(
            items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
        ),
        other => Some(other.to_string()),
    })
}

/// Flags synthesized from `--config` for every key the command line did not
/// set explicitly.
fn config_flags(
    subcommand: &str,
    sub_matches: &clap::ArgMatches,
    path: &Path,
) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| HandaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| HandaError::Format {
        path: path.to_path_buf(),
        line: e
            .span()
            .map(|s| text[..s.start].matches('\n').count() + 1)
            .unwrap_or(1),
        msg: e.message().to_string(),
    })?;
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(subcommand)
        .expect("subcommand was just parsed");
    let mut out = Vec::new();
    for (key, value) in &table {
        if key == "config" {
            continue;
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_id().as_str() == key) else {
            return Err(CliError::usage(
                subcommand,
                format!("unknown key '{key}' in {}", path.display()),
            ));
        };
        if sub_matches.value_source(key) == Some(ValueSource::CommandLine) {
            continue;
        }
        let long = arg.get_long().expect("every option has a long name");
        match toml_to_arg(value) {
            None => {}
            Some(None) => out.push(OsString::from(format!("--{long}"))),
            Some(Some(v)) => out.push(OsString::from(format!("--{long}={v}"))),
        }
    }
    Ok(out)
}

fn clap_failure(e: clap::Error) -> Result<Cli, i32> {
    use clap::error::ErrorKind as K;
    match e.kind() {
        K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand
            if e.exit_code() == 0 =>
        {
            let _ = e.print();
            Err(0)
        }
        _ => {
            let msg = e.kind().as_str().unwrap_or("invalid arguments").to_string();
            let first = e.to_string();
            let detail = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!(
                "handa: error kind=usage exit={EXIT_USAGE} message={:?}",
                if detail.is_empty() { msg } else { detail.to_string() }
            );
            let _ = e.print();
            Err(EXIT_USAGE)
        }
    }
}

/// Parses `argv` (program name first), merging `--config` files.
pub fn parse(argv: Vec<OsString>) -> Result<Cli, i32> {
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => return clap_failure(e),
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let config = sub.get_one::<std::path::PathBuf>("config").cloned();
    let Some(config) = config else {
        return Cli::from_arg_matches(&matches).or_else(clap_failure);
    };
    let extra = match config_flags(name, sub, &config) {
        Ok(v) => v,
        Err(e) => {
            e.report();
            return Err(e.exit_code());
        }
    };
    // argv = [program, subcommand, rest...]; file values go before the
    // user's flags, which are all kept.
    let pos = argv
        .iter()
        .position(|a| a.to_str() == Some(name))
        .unwrap_or(1);
    let mut merged: Vec<OsString> = argv[..=pos].to_vec();
    merged.extend(extra);
    merged.extend(argv[pos + 1..].iter().cloned());
    match Cli::command().try_get_matches_from(&merged) {
        Ok(m) => Cli::from_arg_matches(&m).or_else(clap_failure),
        Err(e) => clap_failure(e),
    }
}

/// Runs one command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse(argv) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            e.report();
            e.exit_code()
        }
    }
}
