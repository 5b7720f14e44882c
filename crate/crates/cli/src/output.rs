//! File and table writers shared by the subcommands.

use anyhow::{Context, Result};
use minseek::controller::{RunOutcome, RunStatus};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn status_name(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Answered => "answered",
        RunStatus::RunawayAccepted => "runaway",
        RunStatus::Truncated => "truncated",
    }
}

pub fn peak_rows(outcome: &RunOutcome) -> usize {
    outcome.costs.iter().map(|c| c.cache_rows).max().unwrap_or(0)
}

pub fn total_scores(outcome: &RunOutcome) -> u64 {
    outcome.costs.last().map(|c| c.cumulative_scores).unwrap_or(0)
}

pub fn summary_text(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    writeln!(s, "status {}", status_name(outcome.status)).unwrap();
    writeln!(s, "tokens {}", outcome.tokens_generated).unwrap();
    writeln!(s, "cycles {}", outcome.rc_count).unwrap();
    writeln!(s, "prompt_len {}", outcome.prompt_len).unwrap();
    writeln!(s, "transcript_len {}", outcome.transcript.len()).unwrap();
    writeln!(s, "injections {}", outcome.injections.len()).unwrap();
    writeln!(s, "peak_rows {}", peak_rows(outcome)).unwrap();
    writeln!(s, "total_scores {}", total_scores(outcome)).unwrap();
    writeln!(s, "max_position {}", outcome.max_materialized_position).unwrap();
    writeln!(s, "memory_mid_ratio {:.4}", outcome.memory_mid_decode.key_to_value_ratio()).unwrap();
    writeln!(s, "memory_after_ratio {:.4}", outcome.memory_after_discard.key_to_value_ratio())
        .unwrap();
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn transcript_text(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    for id in &outcome.transcript {
        writeln!(s, "{}", id).unwrap();
    }
    s
}

/// Two-column data file that gnuplot and friends read as-is.
pub fn plot_text(x_name: &str, y_name: &str, points: impl Iterator<Item = (u64, u64)>) -> String {
    let mut s = format!("# {} {}\n", x_name, y_name);
    for (x, y) in points {
        writeln!(s, "{} {}", x, y).unwrap();
    }
    s
}

/// Right-align every column except the first, pad with two spaces between.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut s = String::new();
    let mut emit = |cells: &[String]| {
        for (i, cell) in cells.iter().enumerate().take(cols) {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                write!(s, "{:<width$}", cell, width = widths[i]).unwrap();
            } else {
                write!(s, "{:>width$}", cell, width = widths[i]).unwrap();
            }
        }
        while s.ends_with(' ') {
            s.pop();
        }
        s.push('\n');
    };
    emit(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    for row in rows {
        emit(row);
    }
    s
}

pub fn tsv_text(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = headers.join("\t");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join("\t"));
        s.push('\n');
    }
    s
}

pub fn out_path(dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{}{}", stem, suffix))
}
