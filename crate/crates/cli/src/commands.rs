//! The four subcommands: run, validate, bench, compare.

use crate::config::{self, Overrides, Resolved};
use crate::output;
use anyhow::{bail, Context, Result};
use minseek::controller::{run_generation, MaxRc, RunOutcome};
use minseek::{fit_complexity, normalize, verify_boundaries};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

fn resolve_from(config_path: &Path, over: &Overrides) -> Result<Resolved> {
    let cfg = config::load(config_path)?;
    config::resolve(&cfg, over)
}

fn execute(r: &Resolved) -> Result<RunOutcome> {
    run_generation(&r.model, &r.prompt, r.policy, r.options.clone())
        .context("generation failed")
}

pub fn run(
    config_path: &Path,
    over: &Overrides,
    out_dir: &Path,
    trace_out: Option<&Path>,
) -> Result<()> {
    let r = resolve_from(config_path, over)?;
    let outcome = execute(&r)?;

    let trace_path = trace_out
        .map(PathBuf::from)
        .unwrap_or_else(|| output::out_path(out_dir, &r.tag, ".trace"));
    output::write_text(&trace_path, &outcome.trace_text())?;
    let transcript_path = output::out_path(out_dir, &r.tag, ".transcript.txt");
    output::write_text(&transcript_path, &output::transcript_text(&outcome))?;
    let summary = output::summary_text(&outcome);
    let summary_path = output::out_path(out_dir, &r.tag, ".summary.txt");
    output::write_text(&summary_path, &summary)?;

    print!("{}", summary);
    println!("trace {}", trace_path.display());
    println!("transcript {}", transcript_path.display());
    println!("summary {}", summary_path.display());
    Ok(())
}

pub fn validate(config_path: &Path, over: &Overrides) -> Result<()> {
    let r = resolve_from(config_path, over)?;
    let outcome = execute(&r)?;
    let reports = verify_boundaries(&r.model, &outcome)
        .context("boundary verification could not run")?;

    if reports.is_empty() {
        println!("no cycle boundaries to check (no triggers were injected)");
        return Ok(());
    }
    let mut failed = None;
    for rep in &reports {
        let recompute = match rep.recompute_deviation {
            Some(d) => format!("{:.3e}", d),
            None => "skipped".to_string(),
        };
        let verdict = if rep.within_tolerance() { "ok" } else { "FAIL" };
        println!(
            "boundary {} transcript_index={} rows={} clean={} replay={:.3e} recompute={} {}",
            rep.boundary,
            rep.transcript_index,
            rep.rows,
            rep.clean_history,
            rep.replay_deviation,
            recompute,
            verdict
        );
        if failed.is_none() && !rep.within_tolerance() {
            failed = Some((rep.boundary, rep.transcript_index));
        }
    }
    if let Some((boundary, idx)) = failed {
        bail!(
            "boundary {} (transcript index {}) deviates beyond tolerance; the cache does not \
             match an honest recomputation",
            boundary,
            idx
        );
    }
    println!("all {} boundaries within tolerance", reports.len());
    Ok(())
}

pub fn bench(config_path: &Path, over: &Overrides, out_dir: &Path) -> Result<()> {
    let r = resolve_from(config_path, over)?;
    let outcome = execute(&r)?;

    let cost_path = output::out_path(out_dir, &r.tag, ".cost.dat");
    output::write_text(
        &cost_path,
        &output::plot_text(
            "generated_index",
            "cumulative_scores",
            outcome.costs.iter().map(|c| (c.generated_index as u64, c.cumulative_scores)),
        ),
    )?;
    let rows_path = output::out_path(out_dir, &r.tag, ".rows.dat");
    output::write_text(
        &rows_path,
        &output::plot_text(
            "generated_index",
            "cache_rows",
            outcome.costs.iter().map(|c| (c.generated_index as u64, c.cache_rows as u64)),
        ),
    )?;

    println!("status {}", output::status_name(outcome.status));
    println!("tokens {}", outcome.tokens_generated);
    println!("total_scores {}", output::total_scores(&outcome));
    println!("peak_rows {}", output::peak_rows(&outcome));
    println!("cost_points {}", cost_path.display());
    println!("rows_points {}", rows_path.display());

    let xs: Vec<f64> = outcome.costs.iter().map(|c| c.generated_index as f64).collect();
    let ys: Vec<f64> = outcome.costs.iter().map(|c| c.cumulative_scores as f64).collect();
    match fit_complexity(&xs, &ys) {
        Ok(fit) => {
            println!("linear_fit_r2 {:.6}", fit.linear_r2);
            println!("quadratic_fit_r2 {:.6}", fit.quadratic_r2);
        }
        Err(e) => println!("fit skipped: {}", e),
    }
    Ok(())
}

pub const DEFAULT_GRID: &str = "0,2,4,6,10,20,50,100,unbounded";

fn parse_grid(grid: &str) -> Result<Vec<MaxRc>> {
    let points: Vec<MaxRc> = grid
        .split(',')
        .map(|s| config::parse_max_rc(s.trim()))
        .collect::<Result<_>>()
        .context("bad --grid value")?;
    if points.is_empty() {
        bail!("--grid needs at least one point");
    }
    Ok(points)
}

fn grid_label(m: MaxRc) -> String {
    match m {
        MaxRc::Bounded(n) => format!("m{}", n),
        MaxRc::Unbounded => "munb".to_string(),
    }
}

pub fn compare(config_path: &Path, over: &Overrides, out_dir: &Path, grid: &str) -> Result<()> {
    let r = resolve_from(config_path, over)?;
    let points = parse_grid(grid)?;

    let mut baseline_policy = r.policy;
    baseline_policy.max_rc = MaxRc::Bounded(0);
    let baseline = run_generation(&r.model, &r.prompt, baseline_policy, r.options.clone())
        .context("zero-cycle baseline failed")?;
    let base_tokens = baseline.tokens_generated as f64;
    let base_scores = output::total_scores(&baseline) as f64;

    let outcomes: Vec<(MaxRc, RunOutcome)> = points
        .par_iter()
        .map(|&m| {
            let mut policy = r.policy;
            policy.max_rc = m;
            run_generation(&r.model, &r.prompt, policy, r.options.clone())
                .map(|out| (m, out))
                .with_context(|| format!("grid point {} failed", grid_label(m)))
        })
        .collect::<Result<_>>()?;

    let headers =
        ["point", "status", "tokens", "cycles", "scores", "peak_rows", "tokens_x", "scores_x"];
    let mut rows = Vec::new();
    for (m, out) in &outcomes {
        let mut policy = r.policy;
        policy.max_rc = *m;
        let stem = format!("{}_{}", config::policy_tag(&policy), config::source_tag(&r.options));
        output::write_text(&output::out_path(out_dir, &stem, ".trace"), &out.trace_text())?;

        let token_ratio = normalize(out.tokens_generated as f64, base_tokens)
            .context("token ratio")?;
        let score_ratio =
            normalize(output::total_scores(out) as f64, base_scores).context("score ratio")?;
        rows.push(vec![
            grid_label(*m),
            output::status_name(out.status).to_string(),
            out.tokens_generated.to_string(),
            out.rc_count.to_string(),
            output::total_scores(out).to_string(),
            output::peak_rows(out).to_string(),
            format!("{:.3}", token_ratio.ratio),
            format!("{:.3}", score_ratio.ratio),
        ]);
    }

    let tsv_path = out_dir.join(format!(
        "compare_{}_{}.tsv",
        config::method_tag(&r.policy),
        config::source_tag(&r.options)
    ));
    output::write_text(&tsv_path, &output::tsv_text(&headers, &rows))?;
    print!("{}", output::render_table(&headers, &rows));
    println!("table {}", tsv_path.display());
    Ok(())
}
