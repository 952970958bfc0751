//! Command-line front end for the experiment harness.
//!
//! Exit codes: 0 success, 1 validation or runtime error, 2 failed
//! acceptance assertion in `--check` mode. The `SOCO_THREADS` environment
//! variable overrides the worker count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use soco::analysis::BoundReport;
use soco::harness::output::{realization_json, to_json_string};
use soco::harness::{
    run_experiment, sweep_window, tail_experiment, write_outputs, write_sweep, write_tail,
    ExperimentConfig, ResolvedExperiment,
};
use soco::prediction::realize;
use soco::Error;

#[derive(Parser)]
#[command(
    name = "soco",
    about = "Smoothed online convex optimization: AFHC-family policies, \
performance bounds, and seeded Monte Carlo experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the theoretical bound report(s) as JSON
    Bounds {
        #[arg(long)]
        config: PathBuf,
        /// Window size; defaults to every window configured under `algorithms`
        #[arg(long)]
        w: Option<usize>,
    },
    /// Run the experiment exactly as configured
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Assert the per-sample theory checks; exit 2 on violation
        #[arg(long)]
        check: bool,
    },
    /// Run the experiment with an overridden sample count
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        check: bool,
    },
    /// Sweep window sizes with common random numbers
    SweepWindow {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated list, e.g. `--w 0,1,2,4,8`
        #[arg(long, value_delimiter = ',', required = true)]
        w: Vec<usize>,
    },
    /// Empirical tail of the AFHC competitive difference vs the bounds
    Tail {
        #[arg(long)]
        config: PathBuf,
        /// Grid as `start:stop:step` (inclusive) or a comma list
        #[arg(long = "u-grid")]
        u_grid: String,
        #[arg(long)]
        check: bool,
    },
    /// Dump one realization (predictions, innovations, targets) as JSON
    Realize {
        #[arg(long)]
        config: PathBuf,
        /// Realization seed (used directly, not mixed per-sample)
        #[arg(long)]
        seed: u64,
    },
}

fn load(config: &PathBuf) -> Result<ResolvedExperiment, Error> {
    let text = std::fs::read_to_string(config)?;
    ExperimentConfig::from_json(&text)?.resolve()
}

fn parse_u_grid(text: &str) -> Result<Vec<f64>, Error> {
    let bad = |msg: &str| Error::InvalidArgument(format!("--u-grid {text}: {msg}"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let start: f64 = parts[0].parse().map_err(|_| bad("bad start"))?;
        let stop: f64 = parts[1].parse().map_err(|_| bad("bad stop"))?;
        let step: f64 = parts[2].parse().map_err(|_| bad("bad step"))?;
        if step <= 0.0 || stop < start {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let mut grid = Vec::new();
        let mut i = 0usize;
        loop {
            let u = start + step * i as f64;
            if u > stop + 1e-12 * step {
                break;
            }
            grid.push(u);
            i += 1;
        }
        Ok(grid)
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad entry")))
            .collect()
    }
}

fn print_summary(out: &soco::harness::ExperimentOutput) {
    println!(
        "samples: {} completed, {} aborted",
        out.summary.samples, out.summary.aborted
    );
    println!(
        "cost(OPT) mean {:.6} (se {:.2e}), cost(STA) mean {:.6} (se {:.2e})",
        out.summary.mean_cost_opt,
        out.summary.se_cost_opt,
        out.summary.mean_cost_sta,
        out.summary.se_cost_sta
    );
    for alg in &out.summary.algorithms {
        let w = alg
            .w
            .map(|w| format!(" w={w}"))
            .unwrap_or_default();
        println!(
            "{}{}: cost {:.6} (se {:.2e}), regret {:.6}, comp_diff {:.6}, comp_ratio {:.6}",
            alg.algorithm, w, alg.mean_cost, alg.se_cost, alg.mean_regret, alg.mean_comp_diff,
            alg.comp_ratio
        );
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Bounds { config, w } => {
            let resolved = load(&config)?;
            let ws: Vec<usize> = match w {
                Some(w) => vec![w],
                None => {
                    let mut ws: Vec<usize> =
                        resolved.policies.iter().filter_map(|p| p.w()).collect();
                    ws.sort_unstable();
                    ws.dedup();
                    if ws.is_empty() {
                        return Err(Error::config(
                            "algorithms",
                            "no windowed algorithm configured; pass --w",
                        ));
                    }
                    ws
                }
            };
            for w in ws {
                let report =
                    BoundReport::new(&resolved.spec, &resolved.impulse, &resolved.noise, w);
                println!("{}", to_json_string(&report)?);
                eprintln!(
                    "# w={w}: V (1-norm, reported) = {:.12}, V (2-norm variant) = {:.12}",
                    report.v, report.v_two_norm
                );
            }
        }
        Command::Run { config, check } => {
            let resolved = load(&config)?;
            let out = run_experiment(&resolved, None, check)?;
            let paths = write_outputs(&out, &resolved, &resolved.output)?;
            print_summary(&out);
            println!("wrote {}", paths.samples.display());
            println!("wrote {}", paths.summary.display());
            println!("wrote {}", paths.config.display());
        }
        Command::Montecarlo {
            config,
            samples,
            check,
        } => {
            let mut resolved = load(&config)?;
            resolved.samples = samples;
            resolved.config.samples = samples;
            let out = run_experiment(&resolved, None, check)?;
            let paths = write_outputs(&out, &resolved, &resolved.output)?;
            print_summary(&out);
            println!("wrote {}", paths.samples.display());
        }
        Command::SweepWindow { config, w } => {
            let resolved = load(&config)?;
            let rows = sweep_window(&resolved, &w, None)?;
            let path = write_sweep(&rows, &resolved.output)?;
            println!("w,V,mean_comp_diff,mean_regret");
            for row in &rows {
                println!(
                    "{},{:.9},{:.9},{:.9}",
                    row.w, row.v, row.mean_comp_diff, row.mean_regret
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Tail {
            config,
            u_grid,
            check,
        } => {
            let resolved = load(&config)?;
            let grid = parse_u_grid(&u_grid)?;
            let out = tail_experiment(&resolved, &grid, None, check)?;
            let paths = write_outputs(&out.experiment, &resolved, &resolved.output)?;
            let tail_path = write_tail(&out.rows, out.vt, &resolved.output)?;
            println!("VT = {:.6}", out.vt);
            println!("u,empirical,std_error,bound_two_term,bound_simplified");
            for row in &out.rows {
                println!(
                    "{},{:.6e},{:.6e},{:.6e},{:.6e}",
                    row.u, row.empirical, row.std_error, row.bound_two_term,
                    row.bound_simplified
                );
            }
            println!("wrote {}", paths.samples.display());
            println!("wrote {}", tail_path.display());
        }
        Command::Realize { config, seed } => {
            let resolved = load(&config)?;
            let r = realize(
                &resolved.impulse,
                &resolved.noise,
                resolved.y_hat.clone(),
                seed,
            )?;
            println!("{}", realization_json(&r)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
