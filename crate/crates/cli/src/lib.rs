//! The `xrflux` command line: each subcommand is one pipeline stage, and
//! stages talk to each other only through files.

pub mod commands;
pub mod config;
pub mod output;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use xrflux_core::cache::PolicyKind;
use xrflux_edge::DelayMode;

pub use commands::run;

#[derive(Debug, Parser)]
#[command(name = "xrflux", version, about = "VR field-of-view workload generation and edge-cache replay")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Seed for the stage: scenario seed for `simulate`, IRM seed for `irm`,
    /// delay seed for `replay` and `serve`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the motion simulation and write `visibility.log`.
    Simulate,
    /// Turn a visibility log into request traces (`<strategy>.trace`).
    Derive {
        #[arg(long)]
        log: PathBuf,
        /// Strategies to derive; defaults to all three.
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<String>,
    },
    /// Build the IRM baseline (`irm.trace`) from a demand-only trace.
    Irm {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Replay traces in process and write the report tables.
    Replay(ReplayArgs),
    /// Run the HTTP edge cache.
    Serve(ServeArgs),
    /// Replay traces against a running edge service.
    ReplayHttp {
        #[arg(long)]
        endpoint: String,
        #[command(flatten)]
        replay: ReplayArgs,
    },
    /// Merge report tables from several run directories.
    Report {
        /// Directories holding `sweep.csv`, `users.csv` and friends.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Trace files, optionally `label=path`; the label defaults to the file
    /// stem and names the strategy column.
    #[arg(long, required = true, num_args = 1..)]
    pub trace: Vec<String>,
    /// Capacities such as `5`, `2,4,8` or `1..16`.
    #[arg(long)]
    pub capacities: Option<String>,
    #[arg(long)]
    pub policy: Option<PolicyKind>,
    /// Capacity for the per-user table.
    #[arg(long)]
    pub user_capacity: Option<usize>,
    /// Immediate FoV depth the traces were made with; adds
    /// `depth_sweep.csv` built from the `standard` trace.
    #[arg(long)]
    pub depth: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[arg(long)]
    pub capacity: Option<usize>,
    #[arg(long)]
    pub mode: Option<DelayMode>,
    #[arg(long)]
    pub payload_bytes: Option<usize>,
    /// Number of valid object ids.
    #[arg(long)]
    pub catalog: Option<u32>,
    #[arg(long)]
    pub policy: Option<PolicyKind>,
}
