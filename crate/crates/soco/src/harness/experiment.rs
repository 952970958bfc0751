//! Seeded Monte Carlo experiment execution.
//!
//! Sample `i` draws its realization from `mix_seed(config.seed, i)`, so
//! every output byte is a function of the config alone, independent of the
//! worker count. Workers run samples in parallel; results are collected and
//! aggregated in sample-index order.

use rayon::prelude::*;
use serde::Serialize;

use crate::algorithms::{
    run_afhc_with, run_fhc_with, run_open_with, run_opt_with, run_rhc_with, run_sta,
    AlgorithmRun, RunOptions,
};
use crate::analysis::{conc_tail_bound, decompose_g1_g2, BoundReport, MetricRecord};
use crate::prediction::realize;
use crate::problem::KahanSum;
use crate::rng::mix_seed;
use crate::{Error, Result};

use super::config::{ConfiguredPolicy, ResolvedExperiment};

/// Name of the environment variable overriding the worker count.
pub const THREADS_ENV: &str = "SOCO_THREADS";

/// One sample's records (a row per configured algorithm).
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub sample: usize,
    pub seed: u64,
    pub records: Vec<MetricRecord>,
    pub cost_opt: f64,
    pub cost_sta: f64,
}

/// A sample that could not be completed (solver failure); recorded, never
/// silently dropped.
#[derive(Debug, Clone, Serialize)]
pub struct AbortRecord {
    pub sample: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub w: Option<usize>,
    pub samples: usize,
    pub mean_cost: f64,
    pub se_cost: f64,
    pub mean_regret: f64,
    pub se_regret: f64,
    pub mean_comp_diff: f64,
    pub se_comp_diff: f64,
    /// Empirical competitive ratio: mean cost / mean cost(OPT).
    pub comp_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_g1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_g2: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryStats {
    pub samples: usize,
    pub aborted: usize,
    pub mean_cost_opt: f64,
    pub se_cost_opt: f64,
    pub mean_cost_sta: f64,
    pub se_cost_sta: f64,
    pub algorithms: Vec<AlgorithmSummary>,
    pub aborts: Vec<AbortRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Completed samples in index order.
    pub outcomes: Vec<SampleOutcome>,
    pub aborts: Vec<AbortRecord>,
    pub summary: SummaryStats,
    /// One report per distinct configured lookahead.
    pub bound_reports: Vec<BoundReport>,
}

enum SampleFailure {
    Abort(String),
    Check(String),
}

/// Per-sample tolerance used by the `--check` assertions.
const CHECK_TOL: f64 = 1e-6;

fn run_sample(
    resolved: &ResolvedExperiment,
    sample: usize,
    check: bool,
) -> std::result::Result<SampleOutcome, SampleFailure> {
    let seed = mix_seed(resolved.seed, sample as u64);
    let opts = RunOptions::default();
    let abort = |e: Error| SampleFailure::Abort(e.to_string());
    let r = realize(
        &resolved.impulse,
        &resolved.noise,
        resolved.y_hat.clone(),
        seed,
    )
    .map_err(abort)?;
    let (opt_run, _solve) = run_opt_with(&r, &resolved.spec, &opts).map_err(abort)?;
    let sta_run = run_sta(&r, &resolved.spec).map_err(abort)?;
    let cost_opt = opt_run.cost.total();
    let cost_sta = sta_run.cost.total();

    let mut records = Vec::with_capacity(resolved.policies.len());
    for policy in &resolved.policies {
        let (run, g1g2): (AlgorithmRun, Option<(f64, f64)>) = match *policy {
            ConfiguredPolicy::Fhc { k, w } => (
                run_fhc_with(k, w, &r, &resolved.spec, &resolved.impulse, &opts)
                    .map_err(abort)?,
                None,
            ),
            ConfiguredPolicy::Afhc { w } => {
                let out = run_afhc_with(w, &r, &resolved.spec, &resolved.impulse, &opts)
                    .map_err(abort)?;
                let (g1, g2) =
                    decompose_g1_g2(&out, &opt_run, &r, &resolved.impulse, &resolved.spec)
                        .map_err(abort)?;
                if check {
                    let cd = out.afhc.cost.total() - cost_opt;
                    if cd > g1 + g2 + CHECK_TOL {
                        return Err(SampleFailure::Check(format!(
                            "sample {sample}: comp_diff {cd} exceeds g1+g2 = {}",
                            g1 + g2
                        )));
                    }
                    let mean_fhc = out
                        .components
                        .iter()
                        .map(|c| c.cost.total())
                        .sum::<f64>()
                        / out.components.len() as f64;
                    if out.afhc.cost.total() > mean_fhc + 1e-9 {
                        return Err(SampleFailure::Check(format!(
                            "sample {sample}: AFHC cost above the FHC average"
                        )));
                    }
                }
                (out.afhc, Some((g1, g2)))
            }
            ConfiguredPolicy::Open => (
                run_open_with(&r, &resolved.spec, &resolved.impulse, &opts).map_err(abort)?,
                None,
            ),
            ConfiguredPolicy::Rhc { w } => (
                run_rhc_with(w, &r, &resolved.spec, &resolved.impulse, &opts)
                    .map_err(abort)?,
                None,
            ),
            ConfiguredPolicy::Opt => (opt_run.clone(), None),
            ConfiguredPolicy::Sta => (sta_run.clone(), None),
        };
        let total = run.cost.total();
        if check && cost_opt > total + CHECK_TOL {
            return Err(SampleFailure::Check(format!(
                "sample {sample}: OPT cost {cost_opt} exceeds {} cost {total}",
                run.name
            )));
        }
        records.push(MetricRecord {
            name: run.name,
            w: run.w,
            cost: run.cost,
            cost_opt,
            cost_sta,
            regret: total - cost_sta,
            comp_diff: total - cost_opt,
            g1: g1g2.map(|p| p.0),
            g2: g1g2.map(|p| p.1),
            seed,
        });
    }
    Ok(SampleOutcome {
        sample,
        seed,
        records,
        cost_opt,
        cost_sta,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut acc = KahanSum::new();
    for &v in values {
        acc.add(v);
    }
    let mean = acc.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut var_acc = KahanSum::new();
    for &v in values {
        var_acc.add((v - mean) * (v - mean));
    }
    let sd = (var_acc.value() / (n - 1) as f64).sqrt();
    (mean, sd / (n as f64).sqrt())
}

fn summarize(
    resolved: &ResolvedExperiment,
    outcomes: &[SampleOutcome],
    aborts: Vec<AbortRecord>,
) -> SummaryStats {
    let opt_costs: Vec<f64> = outcomes.iter().map(|o| o.cost_opt).collect();
    let sta_costs: Vec<f64> = outcomes.iter().map(|o| o.cost_sta).collect();
    let (mean_cost_opt, se_cost_opt) = mean_and_se(&opt_costs);
    let (mean_cost_sta, se_cost_sta) = mean_and_se(&sta_costs);
    let mut algorithms = Vec::with_capacity(resolved.policies.len());
    for (idx, policy) in resolved.policies.iter().enumerate() {
        let costs: Vec<f64> = outcomes
            .iter()
            .map(|o| o.records[idx].cost.total())
            .collect();
        let regrets: Vec<f64> = outcomes.iter().map(|o| o.records[idx].regret).collect();
        let cds: Vec<f64> = outcomes.iter().map(|o| o.records[idx].comp_diff).collect();
        let (mean_cost, se_cost) = mean_and_se(&costs);
        let (mean_regret, se_regret) = mean_and_se(&regrets);
        let (mean_comp_diff, se_comp_diff) = mean_and_se(&cds);
        let mean_g = |pick: fn(&MetricRecord) -> Option<f64>| -> Option<f64> {
            let vals: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| pick(&o.records[idx]))
                .collect();
            if vals.is_empty() {
                None
            } else {
                Some(mean_and_se(&vals).0)
            }
        };
        let name = outcomes
            .first()
            .map(|o| o.records[idx].name.to_string())
            .unwrap_or_else(|| format!("{policy:?}"));
        algorithms.push(AlgorithmSummary {
            algorithm: name,
            w: policy.w(),
            samples: outcomes.len(),
            mean_cost,
            se_cost,
            mean_regret,
            se_regret,
            mean_comp_diff,
            se_comp_diff,
            comp_ratio: mean_cost / mean_cost_opt,
            mean_g1: mean_g(|r| r.g1),
            mean_g2: mean_g(|r| r.g2),
        });
    }
    SummaryStats {
        samples: outcomes.len(),
        aborted: aborts.len(),
        mean_cost_opt,
        se_cost_opt,
        mean_cost_sta,
        se_cost_sta,
        algorithms,
        aborts,
    }
}

fn thread_count(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
    })
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match thread_count(threads) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

/// Runs all configured algorithms (plus OPT and STA) over `samples`
/// realizations. Fails when more than 0.1% of samples abort, or, in check
/// mode, when any per-sample assertion fails.
pub fn run_experiment(
    resolved: &ResolvedExperiment,
    threads: Option<usize>,
    check: bool,
) -> Result<ExperimentOutput> {
    let results: Vec<std::result::Result<SampleOutcome, SampleFailure>> =
        with_pool(threads, || {
            (0..resolved.samples)
                .into_par_iter()
                .map(|i| run_sample(resolved, i, check))
                .collect()
        })?;

    let mut outcomes = Vec::with_capacity(resolved.samples);
    let mut aborts = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(outcome) => outcomes.push(outcome),
            Err(SampleFailure::Check(msg)) => return Err(Error::CheckFailed(msg)),
            Err(SampleFailure::Abort(error)) => aborts.push(AbortRecord {
                sample: i,
                seed: mix_seed(resolved.seed, i as u64),
                error,
            }),
        }
    }
    // Statistical integrity gate: a run with too many failed solves is void.
    if aborts.len() * 1000 > resolved.samples {
        return Err(Error::TooManyAborts {
            aborted: aborts.len(),
            total: resolved.samples,
        });
    }

    let mut ws: Vec<usize> = resolved.policies.iter().filter_map(|p| p.w()).collect();
    ws.sort_unstable();
    ws.dedup();
    let bound_reports: Vec<BoundReport> = ws
        .iter()
        .map(|&w| BoundReport::new(&resolved.spec, &resolved.impulse, &resolved.noise, w))
        .collect();

    let summary = summarize(resolved, &outcomes, aborts.clone());
    Ok(ExperimentOutput {
        outcomes,
        aborts,
        summary,
        bound_reports,
    })
}

/// One row of the tail table.
#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub u: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound_two_term: f64,
    pub bound_simplified: f64,
}

#[derive(Debug, Clone)]
pub struct TailOutput {
    pub experiment: ExperimentOutput,
    pub rows: Vec<TailRow>,
    pub vt: f64,
}

/// Estimates `P(comp_diff(AFHC) > VT + u)` over the grid and evaluates the
/// two theoretical tail bounds (clamped to [0,1] as probabilities).
pub fn tail_experiment(
    resolved: &ResolvedExperiment,
    u_grid: &[f64],
    threads: Option<usize>,
    check: bool,
) -> Result<TailOutput> {
    if resolved.noise.epsilon.is_none() {
        return Err(Error::UnboundedNoise);
    }
    let afhc_idx = resolved
        .policies
        .iter()
        .position(|p| matches!(p, ConfiguredPolicy::Afhc { .. }))
        .ok_or_else(|| {
            Error::config("algorithms", "tail experiment requires an AFHC entry")
        })?;
    let w = resolved.policies[afhc_idx].w().unwrap();
    let experiment = run_experiment(resolved, threads, check)?;
    let report = BoundReport::new(&resolved.spec, &resolved.impulse, &resolved.noise, w);
    let vt = report.v * resolved.spec.horizon() as f64;
    let n = experiment.outcomes.len();
    let mut rows = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let exceed = experiment
            .outcomes
            .iter()
            .filter(|o| o.records[afhc_idx].comp_diff > vt + u)
            .count();
        let p = exceed as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let (two_term, simplified) = conc_tail_bound(&report, u)?;
        let row = TailRow {
            u,
            empirical: p,
            std_error: se,
            bound_two_term: two_term.min(1.0),
            bound_simplified: simplified.min(1.0),
        };
        if check && row.empirical > row.bound_two_term + 3.0 * se {
            return Err(Error::CheckFailed(format!(
                "tail at u = {u}: empirical {p} exceeds bound {} + 3se",
                row.bound_two_term
            )));
        }
        rows.push(row);
    }
    Ok(TailOutput {
        experiment,
        rows,
        vt,
    })
}

/// One row of the window sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub w: usize,
    pub v: f64,
    pub mean_comp_diff: f64,
    pub se_comp_diff: f64,
    pub mean_regret: f64,
    pub se_regret: f64,
}

/// Runs AFHC once per window size with common random numbers (the same
/// innovation streams drive every `w`).
pub fn sweep_window(
    resolved: &ResolvedExperiment,
    w_list: &[usize],
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(w_list.len());
    for &w in w_list {
        if w + 1 > resolved.spec.horizon() {
            return Err(Error::config("w", format!("w = {w} must be <= T-1")));
        }
        let mut sub = resolved.clone();
        sub.policies = vec![ConfiguredPolicy::Afhc { w }];
        let out = run_experiment(&sub, threads, false)?;
        let alg = &out.summary.algorithms[0];
        rows.push(SweepRow {
            w,
            v: crate::analysis::bound_v(&resolved.spec, &resolved.impulse, &resolved.noise, w),
            mean_comp_diff: alg.mean_comp_diff,
            se_comp_diff: alg.se_comp_diff,
            mean_regret: alg.mean_regret,
            se_regret: alg.se_regret,
        });
    }
    Ok(rows)
}

/// Re-derives the per-sample seed (exposed for the CLI `realize` dump).
pub fn sample_seed(master: u64, index: usize) -> u64 {
    mix_seed(master, index as u64)
}
