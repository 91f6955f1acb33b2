//! Command-line front end: seeded runs, parameter sweeps, config checks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use macsynth::config::{apply_axis, ConfigError, ScenarioConfig, SweepAxis};
use macsynth::engine::RunOutput;
use macsynth::metrics::{write_metrics_csv, write_summary, RunSummary};
use macsynth::runner::{run_sweep, run_with_baseline, Scenario};

#[derive(Parser)]
#[command(name = "macsynth", about = "Wireless MAC protocol synthesis simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario for each configured seed and export metrics.
    Run(RunArgs),
    /// Sweep one parameter axis over a list of values.
    Sweep(SweepArgs),
    /// Parse and validate a scenario configuration.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Single seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seed list override.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run with a different MAC than configured.
    #[arg(long)]
    mac_override: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Axis to sweep: load, k, per, or nodes.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
}

enum CliError {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<(ScenarioConfig, Vec<u64>, PathBuf), CliError> {
    let mut cfg = ScenarioConfig::from_file(&common.config)?;
    if let Some(mac) = &common.mac_override {
        cfg.mac = mac.clone();
    }
    let seeds = if let Some(seed) = common.seed {
        vec![seed]
    } else if let Some(seeds) = &common.seeds {
        seeds.clone()
    } else {
        cfg.seeds.clone()
    };
    if seeds.is_empty() {
        return Err(CliError::Config(ConfigError::Invalid {
            path: "seeds".into(),
            message: "at least one seed is required".into(),
        }));
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, seeds, out))
}

fn write_run(
    dir: &Path,
    mac: &str,
    seed: u64,
    output: &RunOutput,
    summary: &RunSummary,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let metrics_path = dir.join(format!("metrics_{mac}_seed{seed}.csv"));
    let mut w = BufWriter::new(File::create(&metrics_path).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", metrics_path.display()))
    })?);
    write_metrics_csv(&mut w, &output.series, &output.node_ids)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary_path = dir.join(format!("summary_{mac}_seed{seed}.txt"));
    let mut w = BufWriter::new(File::create(&summary_path).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", summary_path.display()))
    })?);
    write_summary(&mut w, summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let (cfg, seeds, out) = load_config(&args.common)?;
    let scenario = cfg.build()?;
    let baseline = cfg.compare_baseline_enabled();
    for &seed in &seeds {
        let (output, summary, twin) = run_with_baseline(&scenario, seed, baseline)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_run(&out, &summary.mac, seed, &output, &summary)?;
        if let Some((tw_out, tw_sum)) = twin {
            write_run(&out, &tw_sum.mac, seed, &tw_out, &tw_sum)?;
        }
        let conv = summary
            .segments
            .last()
            .and_then(|s| s.converged_at)
            .or(summary.mab_convergence_window)
            .map(|w| w.to_string())
            .unwrap_or_else(|| "none".into());
        let ratio = summary
            .throughput_ratio_vs_aloha
            .map(|r| format!(" ratio_vs_aloha={r:.3}"))
            .unwrap_or_default();
        println!(
            "run mac={} seed={seed} mean_s={:.4} spread={:.3} converged_at={conv}{ratio}",
            summary.mac, summary.mean_s, summary.spread
        );
    }
    println!("wrote results to {}", out.display());
    Ok(())
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let (cfg, seeds, out) = load_config(&args.common)?;
    let axis = SweepAxis::parse(&args.axis)?;
    if args.values.is_empty() {
        return Err(CliError::Config(ConfigError::Invalid {
            path: "values".into(),
            message: "at least one axis value is required".into(),
        }));
    }
    let mut scenarios: Vec<(f64, Scenario)> = Vec::new();
    for &v in &args.values {
        let varied = apply_axis(&cfg, axis, v)?;
        scenarios.push((v, varied.build()?));
    }
    let rows = run_sweep(scenarios, &seeds).map_err(|e| CliError::Runtime(e.to_string()))?;

    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(format!("sweep_{}.csv", axis.as_str()));
    let mut w = BufWriter::new(File::create(&path).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", path.display()))
    })?);
    let header = format!(
        "{},seed,mean_s,spread,jain,offered_g,converged_at,mab_convergence,defrag_complete,final_redundancy_pct",
        axis.as_str()
    );
    writeln!(w, "{header}").map_err(|e| CliError::Runtime(e.to_string()))?;
    for row in &rows {
        let s = &row.summary;
        let conv = s
            .segments
            .last()
            .and_then(|x| x.converged_at)
            .map(|x| x.to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt6(row.value),
            row.seed,
            fmt6(s.mean_s),
            fmt6(s.spread),
            fmt6(s.jain),
            fmt6(s.offered_g),
            conv,
            s.mab_convergence_window.map(|x| x.to_string()).unwrap_or_default(),
            s.defrag_complete_window.map(|x| x.to_string()).unwrap_or_default(),
            s.final_redundancy_pct.map(fmt6).unwrap_or_default(),
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }

    // Aggregate mean and standard deviation per axis value.
    let agg_path = out.join(format!("sweep_{}_agg.csv", axis.as_str()));
    let mut w = BufWriter::new(File::create(&agg_path).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", agg_path.display()))
    })?);
    writeln!(w, "{},runs,mean_s,std_s,mean_spread", axis.as_str())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for &v in &args.values {
        let group: Vec<&RunSummary> = rows
            .iter()
            .filter(|r| r.value == v)
            .map(|r| &r.summary)
            .collect();
        let n = group.len() as f64;
        let mean = group.iter().map(|s| s.mean_s).sum::<f64>() / n;
        let var = group.iter().map(|s| (s.mean_s - mean).powi(2)).sum::<f64>() / n;
        let spread = group.iter().map(|s| s.spread).sum::<f64>() / n;
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt6(v),
            group.len(),
            fmt6(mean),
            fmt6(var.sqrt()),
            fmt6(spread)
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    println!("wrote sweep results to {}", out.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let cfg = ScenarioConfig::from_file(&args.config)?;
    let scenario = cfg.build()?;
    println!(
        "ok: mac={} nodes={} duration_windows={} seeds={:?}",
        scenario.cfg.mac.as_str(),
        scenario.topo.node_count(),
        scenario.cfg.duration_windows,
        cfg.seeds
    );
    Ok(())
}
