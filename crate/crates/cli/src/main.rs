mod commands;
mod config;
mod output;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Driver for the retention-scheduled decoding engine: runs a toy
/// transformer under a scaling policy and writes traces and metrics.
#[derive(Parser)]
#[command(name = "minseek", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decode once and write trace, transcript, and summary files.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the trace here instead of the default path.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Decode once and check every cycle boundary against a slow
    /// recomputation of the cache.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Decode once and write per-token cost and cache-size curves.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep the cycle budget over a grid and tabulate cost against the
    /// zero-cycle baseline.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated cycle budgets, numbers or "unbounded".
        #[arg(long, default_value = commands::DEFAULT_GRID)]
        grid: String,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// min-seek, budget-forcing, or standard.
    #[arg(long)]
    method: Option<String>,
    /// Finalization variant, 1 or 2.
    #[arg(long)]
    variant: Option<u8>,
    /// Cycle budget: a count or "unbounded".
    #[arg(long)]
    max_rc: Option<String>,
    #[arg(long)]
    token_limit: Option<usize>,
    #[arg(long)]
    segment_cap: Option<usize>,
    /// Sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Script file overriding the config's script.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Where output files go; defaults to MINSEEK_OUT_DIR or ./minseek-out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Verify cache row positions on every step (true by default).
    #[arg(long)]
    checked: Option<bool>,
    /// Plant a stale-position fault in the cache, for testing validate.
    #[arg(long)]
    fault: bool,
}

impl CommonArgs {
    fn overrides(&self) -> config::Overrides {
        config::Overrides {
            method: self.method.clone(),
            variant: self.variant,
            max_rc: self.max_rc.clone(),
            token_limit: self.token_limit,
            segment_cap: self.segment_cap,
            seed: self.seed,
            script: self.script.clone(),
            checked: self.checked,
            fault: self.fault,
        }
    }

    fn out_dir(&self) -> PathBuf {
        if let Some(dir) = &self.out_dir {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var("MINSEEK_OUT_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("minseek-out")
    }
}

fn main() -> Result<()> {
    // Die quietly on a closed pipe (minseek run | head) instead of
    // panicking mid-write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { common, trace_out } => commands::run(
            &common.config,
            &common.overrides(),
            &common.out_dir(),
            trace_out.as_deref(),
        ),
        Cmd::Validate { common } => commands::validate(&common.config, &common.overrides()),
        Cmd::Bench { common } => {
            commands::bench(&common.config, &common.overrides(), &common.out_dir())
        }
        Cmd::Compare { common, grid } => {
            commands::compare(&common.config, &common.overrides(), &common.out_dir(), &grid)
        }
    }
}
