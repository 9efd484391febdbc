//! Command-line driver for the analysis workspace.
//!
//! Each pipeline stage is a subcommand over a persistent workspace
//! directory; the manifest gates stage order. Exit codes: 0 success,
//! 1 usage, 2 missing input file, 3 format/configuration error,
//! 4 stage-order violation.

mod commands;
mod query;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flowverdict::config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "flowverdict",
    version,
    about = "Correlate packet captures, ground-truth labels, and IDS alert logs \
             to triage per-flow detection misses"
)]
pub struct Cli {
    /// Workspace directory (beats config file and FLOWVERDICT_WORKSPACE)
    #[arg(long, global = true)]
    pub workspace: Option<PathBuf>,

    /// Configuration file; snapshot-copied into the workspace
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Suppress informational output
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlertFormat {
    /// Single-line fast alert text
    SnortFast,
    /// Newline-delimited JSON event records
    Eve,
    /// Delimiter-separated file with a header row
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Directional,
    Bidirectional,
}

impl From<DirectionArg> for flowverdict::correlate::Directionality {
    fn from(value: DirectionArg) -> Self {
        match value {
            DirectionArg::Directional => Self::Directional,
            DirectionArg::Bidirectional => Self::Bidirectional,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create a workspace directory with a config snapshot
    Init,
    /// Parse capture files into the packet store
    IngestPcap {
        /// Capture files, ingested in order
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Load ground-truth flow labels (or derive flows from packets)
    IngestFlows {
        /// Label file; omit with --derive
        path: Option<PathBuf>,
        /// Derive flows from the ingested packets instead of a label file
        #[arg(long)]
        derive: bool,
    },
    /// Parse an IDS alert log under a ruleset label
    IngestAlerts {
        path: PathBuf,
        #[arg(long, value_enum)]
        format: AlertFormat,
        /// Label naming the engine/ruleset run, e.g. snort-default
        #[arg(long)]
        ruleset: String,
    },
    /// Map packets and alerts onto flows
    Map {
        /// Seconds of slack past a flow's stop time, in microseconds
        #[arg(long)]
        tolerance_us: Option<u64>,
        #[arg(long, value_enum)]
        packet_direction: Option<DirectionArg>,
        #[arg(long, value_enum)]
        alert_direction: Option<DirectionArg>,
    },
    /// Classify every flow into the confusion taxonomy, per ruleset
    Classify,
    /// Generate per-scenario evidence reports
    Report,
    /// Diff detection outcomes between two ruleset labels
    Compare {
        ruleset_a: String,
        ruleset_b: String,
    },
    /// Print flows matching a predicate (key=value conjuncts)
    Query {
        /// e.g.: tag=attack alert=true dst=192.168.5.123 dport=80
        terms: Vec<String>,
    },
}

/// Errors carrying their process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    MissingInput(PathBuf),
    Format(String),
    StageOrder(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Other(_) => 1,
            CliError::MissingInput(_) => 2,
            CliError::Format(_) => 3,
            CliError::StageOrder(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("usage error: {m}"),
            CliError::MissingInput(p) => format!("missing input file: {}", p.display()),
            CliError::Format(m) => format!("format error: {m}"),
            CliError::StageOrder(m) => format!("stage order violation: {m}"),
            CliError::Other(m) => m.clone(),
        }
    }
}

impl From<flowverdict::workspace::WorkspaceError> for CliError {
    fn from(err: flowverdict::workspace::WorkspaceError) -> Self {
        use flowverdict::workspace::WorkspaceError as W;
        match err {
            W::StageIncomplete { stage, hint } => {
                CliError::StageOrder(format!("stage {stage} incomplete; run `{hint}` first"))
            }
            W::NotInitialized(p) => CliError::StageOrder(format!(
                "workspace {} is not initialized; run `init` first",
                p.display()
            )),
            W::AlreadyInitialized(p) => {
                CliError::Usage(format!("workspace {} is already initialized", p.display()))
            }
            W::Locked(p) => CliError::Other(format!(
                "workspace is locked by another command ({})",
                p.display()
            )),
            W::CorruptStore { path, reason } => {
                CliError::Format(format!("store {} is corrupt: {reason}", path.display()))
            }
            W::InvalidLabel(l) => CliError::Usage(format!("invalid ruleset label {l:?}")),
            W::Config(e) => CliError::Format(e.to_string()),
            W::Io(e) => CliError::Other(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits; everything else is usage
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flowverdict: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

/// Resolve the workspace root: --workspace flag, then the config file's
/// `workspace` entry, then FLOWVERDICT_WORKSPACE, then ./workspace.
pub fn resolve_workspace_root(cli: &Cli, config: Option<&Config>) -> PathBuf {
    if let Some(path) = &cli.workspace {
        return path.clone();
    }
    if let Some(path) = config.and_then(|c| c.workspace.clone()) {
        return path;
    }
    if let Ok(env_path) = std::env::var("FLOWVERDICT_WORKSPACE") {
        if !env_path.is_empty() {
            return PathBuf::from(env_path);
        }
    }
    PathBuf::from("workspace")
}
