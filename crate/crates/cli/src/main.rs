use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use flexgrid_core::error::PhaseExt;
use flexgrid_core::oracle::optimality_gap_suite;
use flexgrid_core::report::consolidate_run;
use flexgrid_core::toy::{fqi_toy_agreement, reference_toy};
use flexgrid_core::{emit_reports, run_experiment, ExperimentConfig, FlexError, PiConfig, Result};

/// Thermostatic load aggregation experiments.
#[derive(Debug, Parser)]
#[command(name = "flexgrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run warm-up, daily retraining and demand-response events, then write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the summary, heatmaps and manifest of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Rewrite the consolidated response curve of a finished run.
    Consolidate {
        #[arg(long)]
        run: PathBuf,
    },
    /// Check the learner against exact DP and the dispatcher against the exhaustive optimum.
    OracleCheck {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Largest accepted heuristic/oracle objective ratio.
        #[arg(long, default_value_t = 1.3)]
        max_ratio: f64,
    },
}

fn run(config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config).phase("config")?;
    let started = Instant::now();
    let outcome = run_experiment(&cfg, out)?;
    println!(
        "run complete: {} events over {} evaluation days in {:.1} s, artifacts in {}",
        outcome.events.len(),
        cfg.eval_days,
        started.elapsed().as_secs_f64(),
        outcome.dir.display()
    );
    Ok(())
}

fn oracle_check(seed: u64, instances: usize, max_ratio: f64) -> Result<()> {
    let mut failures = Vec::new();

    let started = Instant::now();
    let toy = reference_toy().phase("oracle")?;
    let (_, agree) = fqi_toy_agreement(&toy, seed, 0.05).phase("oracle")?;
    let secs = started.elapsed().as_secs_f64();
    let ok = agree.max_abs_error <= 0.02 && agree.sign_fraction() >= 0.99;
    println!(
        "fqi-dp: max_abs_error={:.6} kWh sign_agreement={:.4} over {} cells, {secs:.1} s: {}",
        agree.max_abs_error,
        agree.sign_fraction(),
        agree.compared_cells,
        if ok { "ok" } else { "FAIL" }
    );
    if !ok {
        failures.push("fqi-dp agreement".to_string());
    }

    let gaps = optimality_gap_suite(seed, instances, PiConfig::default()).phase("oracle")?;
    for g in &gaps {
        let bound = if g.bau_target { 1.0 } else { max_ratio };
        let ok = g.ratio() <= bound + 1e-9;
        println!(
            "gap {:>3}: oracle={:.6} heuristic={:.6} ratio={:.4}{}{}",
            g.index,
            g.oracle,
            g.heuristic,
            g.ratio(),
            if g.bau_target { " (bau target)" } else { "" },
            if ok { "" } else { " FAIL" }
        );
        if !ok {
            failures.push(format!("gap instance {}", g.index));
        }
    }
    let total_h: f64 = gaps.iter().map(|g| g.heuristic).sum();
    let total_o: f64 = gaps.iter().map(|g| g.oracle).sum();
    println!(
        "gap summary: {} instances, aggregate ratio {:.4}, {} over bound",
        gaps.len(),
        if total_o > 0.0 { total_h / total_o } else { 1.0 },
        failures.iter().filter(|f| f.starts_with("gap")).count()
    );

    if failures.is_empty() {
        Ok(())
    } else {
        Err(FlexError::Oracle(format!("checks failed: {}", failures.join(", "))).in_phase("oracle"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Report { run } => emit_reports(run).phase("report").map(|()| {
            println!("reports written to {}", run.display());
        }),
        Command::Consolidate { run } => consolidate_run(run).phase("consolidate").map(|n| {
            println!("consolidated {n} events into {}", run.join("consolidated_response.csv").display());
        }),
        Command::OracleCheck {
            seed,
            instances,
            max_ratio,
        } => oracle_check(*seed, *instances, *max_ratio),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flexgrid: {e}");
            ExitCode::FAILURE
        }
    }
}
