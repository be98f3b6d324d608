use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use codednet::analytic::CaseId;
use codednet::harness::{run_case_suite, SuiteConfig};
use codednet::simnet::Mode;
use codednet_cli::config::{RunMode, ScenarioConfig};
use codednet_cli::output::{emit_analytic, emit_metrics, emit_suite, mode_order, Format};
use codednet_cli::runner;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Network-coding performance lab for software-defined networks.
#[derive(Parser)]
#[command(name = "codednet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory prepended to relative --out paths.
    #[arg(long, env = "CODEDNET_OUT_DIR", global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Embedded scenario preset (case1..case4).
    #[arg(long)]
    preset: Option<String>,
    /// Scenario config file, flat key = value or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides applied last, e.g. --set p_loss=0.4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output format: csv, json or table.
    #[arg(long, default_value = "table")]
    format: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the closed-form metric model on a scenario.
    Analytic {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run one seeded simulation and print the measured metrics.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Override the configured mode: coded, uncoded or both.
        #[arg(long)]
        mode: Option<RunMode>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Export the per-packet trace as CSV (single mode only).
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Reproduce the evaluation grid and reconcile simulation against the
    /// model. Exits nonzero when a tolerance check fails.
    Suite {
        /// Cases to run, comma separated (default all), e.g. 1,3.
        #[arg(long)]
        cases: Option<String>,
        /// Number of seeds per cell.
        #[arg(long, default_value_t = 20)]
        seeds: u32,
        /// Simulated seconds per loss/throughput cell.
        #[arg(long, default_value_t = 100.0)]
        duration: f64,
        /// Failure-sampled short runs per fault-tolerance cell.
        #[arg(long, default_value_t = 10_000)]
        fault_runs: u32,
        /// Output format: csv, json or table.
        #[arg(long, default_value = "table")]
        format: String,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_output(text: &str, out: Option<&Path>, out_dir: Option<&Path>) -> Result<()> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => {
            let resolved = match (path.is_relative(), out_dir) {
                (true, Some(dir)) => dir.join(path),
                _ => path.to_path_buf(),
            };
            if let Some(parent) = resolved.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            std::fs::write(&resolved, text)
                .with_context(|| format!("writing {}", resolved.display()))?;
            eprintln!("wrote {}", resolved.display());
            Ok(())
        }
    }
}

fn resolve_scenario(args: &ScenarioArgs) -> Result<(ScenarioConfig, Format)> {
    let config =
        ScenarioConfig::resolve(args.preset.as_deref(), args.config.as_deref(), &args.set)?;
    let format: Format = args.format.parse().map_err(anyhow::Error::from)?;
    Ok((config, format))
}

fn parse_cases(text: Option<&str>) -> Result<Vec<CaseId>> {
    match text {
        None => Ok(CaseId::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<CaseId>().map_err(anyhow::Error::msg))
            .collect(),
    }
}

fn run_cli(cli: Cli) -> Result<ExitCode> {
    let out_dir = cli.out_dir.as_deref();
    match cli.command {
        Command::Analytic { scenario } => {
            let (config, format) = resolve_scenario(&scenario)?;
            let report = runner::analytic_report(&config)?;
            write_output(
                &emit_analytic(&report, format),
                scenario.out.as_deref(),
                out_dir,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            scenario,
            mode,
            seed,
            trace_out,
        } => {
            let (config, format) = resolve_scenario(&scenario)?;
            let mode = mode.unwrap_or(config.mode);
            let seed = seed.unwrap_or(config.seed);
            let modes: Vec<Mode> = match mode {
                RunMode::Uncoded => vec![Mode::Uncoded],
                RunMode::Coded => vec![Mode::Coded],
                RunMode::Both => vec![Mode::Uncoded, Mode::Coded],
            };
            if trace_out.is_some() && modes.len() > 1 {
                bail!("--trace-out needs a single mode (pass --mode coded or --mode uncoded)");
            }
            let mut reports = Vec::new();
            for m in &modes {
                let (report, trace) = runner::simulate(&config, *m, seed)?;
                if let Some(path) = &trace_out {
                    write_output(&trace.to_csv(), Some(path), out_dir)?;
                }
                reports.push(report);
            }
            mode_order(&mut reports);
            write_output(
                &emit_metrics(&reports, format),
                scenario.out.as_deref(),
                out_dir,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Suite {
            cases,
            seeds,
            duration,
            fault_runs,
            format,
            out,
        } => {
            let format: Format = format.parse().map_err(anyhow::Error::from)?;
            let cases = parse_cases(cases.as_deref())?;
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let config = SuiteConfig {
                cases,
                duration_s: duration,
                fault_runs,
                ..SuiteConfig::default()
            };
            let seed_list: Vec<u64> = (1..=seeds as u64).collect();
            let report = run_case_suite(&seed_list, &config);
            write_output(&emit_suite(&report, format), out.as_deref(), out_dir)?;
            if let Some(reason) = &report.aborted {
                bail!("suite aborted: {reason}");
            }
            if report.all_pass() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("suite tolerance checks failed");
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
