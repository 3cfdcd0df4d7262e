// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tenderstake_sim::adversary::{StrategyName, StrategySpec};
use tenderstake_sim::harness::trace::{read_trace, trace_config, JsonLines};
use tenderstake_sim::harness::{
    deviation_payoff, run_experiment, run_sweep, run_traced, sweep_configs, write_rewards_csv,
    write_summary_csv, ExperimentConfig, RunMetrics, SweepRow,
};

#[derive(Parser)]
#[command(name = "tenderstake", version, about = "Run Tenderstake simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed (and the network seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
    },
    /// Run many experiments. Without --config, draws the randomised sweep;
    /// with it, repeats that config over consecutive seeds.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Also write every run's reward records as CSV.
        #[arg(long)]
        rewards_out: Option<PathBuf>,
    },
    /// Re-run a trace's config, compare the traces byte for byte and rerun
    /// the checks.
    Check { trace: PathBuf },
    /// Compare a strategy against following the protocol.
    Payoff {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strategy: Option<StrategyName>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg =
        ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.reseed(s);
    }
    Ok(cfg)
}

fn print_metrics(
    out: &mut impl Write,
    cfg: &ExperimentConfig,
    m: &RunMetrics,
    f: Format,
) -> Result<()> {
    match f {
        Format::Jsonl => writeln!(out, "{}", serde_json::to_string(m)?)?,
        Format::Csv => write_summary_csv(&mut *out, &[SweepRow::new(0, cfg, m)])?,
    }
    Ok(())
}

fn report(m: &RunMetrics) -> ExitCode {
    if m.passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("violations: {}", m.violations.join(", "));
        ExitCode::FAILURE
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Command::Run { config, seed, trace_out, format } => {
            let cfg = load(&config, seed)?;
            let m = match trace_out {
                Some(path) => {
                    let mut sink = JsonLines(BufWriter::new(File::create(&path)?));
                    let m = run_traced(&cfg, &mut sink)?;
                    sink.0.flush()?;
                    m
                }
                None => run_experiment(&cfg)?,
            };
            print_metrics(&mut out, &cfg, &m, format)?;
            Ok(report(&m))
        }
        Command::Sweep { config, seed, runs, format, rewards_out } => {
            let configs = match config {
                Some(path) => {
                    let base = load(&path, None)?;
                    (0..runs as u64)
                        .map(|i| {
                            let mut c = base.clone();
                            c.reseed(seed + i);
                            c
                        })
                        .collect()
                }
                None => sweep_configs(seed, runs),
            };
            let results = run_sweep(&configs);
            let mut metrics = Vec::with_capacity(results.len());
            for (i, r) in results.into_iter().enumerate() {
                metrics.push(r.with_context(|| format!("run {i}"))?);
            }
            match format {
                Format::Csv => {
                    let rows: Vec<SweepRow> = metrics
                        .iter()
                        .enumerate()
                        .map(|(i, m)| SweepRow::new(i, &configs[i], m))
                        .collect();
                    write_summary_csv(&mut out, &rows)?;
                }
                Format::Jsonl => {
                    for m in &metrics {
                        writeln!(out, "{}", serde_json::to_string(m)?)?;
                    }
                }
            }
            if let Some(path) = rewards_out {
                let runs: Vec<(usize, &RunMetrics)> = metrics.iter().enumerate().collect();
                write_rewards_csv(BufWriter::new(File::create(path)?), &runs)?;
            }
            let failed = metrics.iter().filter(|m| !m.passed()).count();
            eprintln!("{} runs, {failed} with violations", metrics.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Check { trace } => {
            let original = std::fs::read(&trace)?;
            let records = read_trace(BufReader::new(&original[..]))?;
            let cfg = trace_config(&records)?.clone();
            let mut replay = JsonLines(Vec::new());
            let m = run_traced(&cfg, &mut replay)?;
            if replay.0 != original {
                bail!("replaying {} produced a different trace", trace.display());
            }
            eprintln!("trace reproduced ({} records)", records.len());
            Ok(report(&m))
        }
        Command::Payoff { config, strategy, seed, format } => {
            let cfg = load(&config, seed)?;
            let spec = match (strategy, &cfg.adversary) {
                (Some(name), _) => StrategySpec::new(name),
                (None, Some(a)) => a.strategy.clone(),
                (None, None) => bail!("payoff needs an [adversary] section"),
            };
            let p = deviation_payoff(&cfg, &spec)?;
            match format {
                Format::Jsonl => writeln!(out, "{}", serde_json::to_string(&p)?)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut out);
                    w.serialize(&p)?;
                    w.flush()?;
                }
            }
            Ok(if spec.name.is_slashable() && !p.deviation_lost() {
                eprintln!("deviation did not lose stake");
                ExitCode::FAILURE
            } else {
                report(&p.deviating)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
