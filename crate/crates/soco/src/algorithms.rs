//! Online and offline policies.
//!
//! `FHC^(k)` commits whole windows of `w+1` actions computed from the
//! predictions available at the window start; the `k`-th copy offsets its
//! window grid by `k` (window starts are `Ω_k = {i ≡ k mod (w+1)} ∩ [−w, T]`,
//! with actions pinned to 0 for `t ≤ 0`). `AFHC` is the pointwise average of
//! the `w+1` copies. `OPEN` optimizes once against the time-zero predictions,
//! `OPT`/`STA` are the offline dynamic and static optima, and `RHC` is the
//! standard receding-horizon baseline (re-solve every step, commit the first
//! action).

use nalgebra::DVector;

use crate::prediction::{predict_range, ImpulseResponse, Realization};
use crate::problem::{CostBreakdown, ProblemSpec, Trajectory};
use crate::solver::{
    self, solve_window_warm, static_optimum, SolveResult, WarmStart, WindowProblem,
};
use crate::{Error, Result};

/// Identifies which policy produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyName {
    Fhc(usize),
    Afhc,
    Open,
    Opt,
    Sta,
    Rhc,
}

impl std::fmt::Display for PolicyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyName::Fhc(k) => write!(f, "FHC({k})"),
            PolicyName::Afhc => write!(f, "AFHC"),
            PolicyName::Open => write!(f, "OPEN"),
            PolicyName::Opt => write!(f, "OPT"),
            PolicyName::Sta => write!(f, "STA"),
            PolicyName::Rhc => write!(f, "RHC"),
        }
    }
}

/// A policy's trajectory and realized cost. The cost is always recomputable
/// from the trajectory via `ProblemSpec::eval_cost`.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub name: PolicyName,
    pub trajectory: Trajectory,
    pub cost: CostBreakdown,
    /// Lookahead parameter (window size is `w+1`); `None` for OPT/STA.
    pub w: Option<usize>,
}

/// How an FHC copy treats its leading partial window (the one that
/// conceptually starts at `τ ≤ 0` with actions pinned to 0 before time 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialWindowPolicy {
    /// Solve with the full `w+1`-step lookahead available at time 1 and
    /// commit only the steps up to the next window boundary. With exact
    /// predictions and `w+1 ≥ T` every FHC copy then reproduces OPT.
    #[default]
    ExtendLookahead,
    /// Solve exactly the clipped window `[1, τ+w]` and commit all of it.
    Truncate,
}

/// Solver settings shared by the policy runners.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_window: InitialWindowPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tol: solver::DEFAULT_TOL,
            max_iter: solver::DEFAULT_MAX_ITER,
            initial_window: InitialWindowPolicy::default(),
        }
    }
}

/// One FHC window: commit range (1-based, inclusive) and the prediction
/// time `τ−1` clamped to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FhcWindow {
    pub start: i64,
    pub commit_lo: usize,
    pub commit_hi: usize,
    pub pred_time: usize,
}

/// Enumerates the windows of `FHC^(k)` over `{1..T}`: starts
/// `τ ∈ Ω_k = {i ≡ k mod (w+1)} ∩ [−w, T]`, clipped to the horizon. The
/// commit ranges partition `{1..T}`.
pub fn fhc_windows(k: usize, w: usize, horizon: usize) -> Vec<FhcWindow> {
    let period = (w + 1) as i64;
    let t_max = horizon as i64;
    // Smallest member of Ω_k that is ≥ −w.
    let mut tau = if k == 0 { 0 } else { k as i64 - period };
    let mut windows = Vec::new();
    while tau <= t_max {
        let commit_lo = tau.max(1);
        let commit_hi = (tau + w as i64).min(t_max);
        if commit_lo <= commit_hi {
            windows.push(FhcWindow {
                start: tau,
                commit_lo: commit_lo as usize,
                commit_hi: commit_hi as usize,
                pred_time: (tau - 1).max(0) as usize,
            });
        }
        tau += period;
    }
    windows
}

fn check_realization(r: &Realization, spec: &ProblemSpec) -> Result<()> {
    if r.horizon() != spec.horizon() {
        return Err(Error::Dimension(format!(
            "realization horizon {} != spec horizon {}",
            r.horizon(),
            spec.horizon()
        )));
    }
    if r.dim() != spec.m() {
        return Err(Error::Dimension(
            "realization dimension != target dimension".into(),
        ));
    }
    Ok(())
}

/// Runs the `k`-th Fixed Horizon Control copy with lookahead `w`.
pub fn run_fhc(
    k: usize,
    w: usize,
    r: &Realization,
    spec: &ProblemSpec,
    f: &ImpulseResponse,
) -> Result<AlgorithmRun> {
    run_fhc_with(k, w, r, spec, f, &RunOptions::default())
}

pub fn run_fhc_with(
    k: usize,
    w: usize,
    r: &Realization,
    spec: &ProblemSpec,
    f: &ImpulseResponse,
    opts: &RunOptions,
) -> Result<AlgorithmRun> {
    if k > w {
        return Err(Error::InvalidArgument(format!(
            "FHC offset k = {k} must satisfy 0 <= k <= w = {w}"
        )));
    }
    check_realization(r, spec)?;
    let horizon = spec.horizon();
    let mut actions = vec![DVector::<f64>::zeros(spec.n()); horizon];
    let mut x_prev = spec.x0().clone();
    for win in fhc_windows(k, w, horizon) {
        let solve_hi = match opts.initial_window {
            InitialWindowPolicy::ExtendLookahead if win.start < 1 => {
                (win.commit_lo + w).min(horizon)
            }
            _ => win.commit_hi,
        };
        let targets = predict_range(r, f, win.pred_time, win.commit_lo, solve_hi);
        let p = WindowProblem::new(spec, targets, x_prev.clone());
        let solved = solve_window_warm(&p, opts.tol, opts.max_iter, None).map_err(|e| {
            Error::Window {
                window: win.commit_lo,
                source: Box::new(e),
            }
        })?;
        let commit_len = win.commit_hi - win.commit_lo + 1;
        for (offset, action) in solved.actions.into_iter().take(commit_len).enumerate() {
            actions[win.commit_lo - 1 + offset] = action;
        }
        x_prev = actions[win.commit_hi - 1].clone();
    }
    let trajectory = Trajectory::new(actions);
    let cost = spec.eval_cost(&r.y, &trajectory)?;
    Ok(AlgorithmRun {
        name: PolicyName::Fhc(k),
        trajectory,
        cost,
        w: Some(w),
    })
}

/// AFHC output: the averaged run plus the `w+1` FHC component runs it was
/// built from (the suboptimality decomposition consumes both).
#[derive(Debug, Clone)]
pub struct AfhcOutput {
    pub afhc: AlgorithmRun,
    pub components: Vec<AlgorithmRun>,
}

/// Averaging Fixed Horizon Control: pointwise average of the `w+1` FHC
/// copies, with cost evaluated on the averaged trajectory.
pub fn run_afhc(
    w: usize,
    r: &Realization,
    spec: &ProblemSpec,
    f: &ImpulseResponse,
) -> Result<AfhcOutput> {
    run_afhc_with(w, r, spec, f, &RunOptions::default())
}

pub fn run_afhc_with(
    w: usize,
    r: &Realization,
    spec: &ProblemSpec,
    f: &ImpulseResponse,
    opts: &RunOptions,
) -> Result<AfhcOutput> {
    check_realization(r, spec)?;
    let mut components = Vec::with_capacity(w + 1);
    for k in 0..=w {
        components.push(run_fhc_with(k, w, r, spec, f, opts)?);
    }
    let horizon = spec.horizon();
    let weight = 1.0 / (w as f64 + 1.0);
    let mut actions = vec![DVector::<f64>::zeros(spec.n()); horizon];
    for run in &components {
        for (acc, a) in actions.iter_mut().zip(&run.trajectory.actions) {
            acc.axpy(weight, a, 1.0);
        }
    }
    let trajectory = Trajectory::new(actions);
    let cost = spec.eval_cost(&r.y, &trajectory)?;
    if cfg!(debug_assertions) {
        // Jensen: the averaged trajectory never costs more than the
        // average of the component costs.
        let mean_cost = components.iter().map(|c| c.cost.total()).sum::<f64>()
            / components.len() as f64;
        debug_assert!(cost.total() <= mean_cost + 1e-9);
    }
    Ok(AfhcOutput {
        afhc: AlgorithmRun {
            name: PolicyName::Afhc,
            trajectory,
            cost,
            w: Some(w),
        },
        components,
    })
}

/// Open-loop control: optimize the whole horizon once against the
/// time-zero predictions, then pay the realized cost.
pub fn run_open(
    r: &Realization,
    spec: &ProblemSpec,
    f: &ImpulseResponse,
) -> Result<AlgorithmRun> {
    run_open_with(r, spec, f, &RunOptions::default())
}

pub fn run_open_with(
    r: &Realization,
    spec: &ProblemSpec,
    f: &ImpulseResponse,
    opts: &RunOptions,
) -> Result<AlgorithmRun> {
    check_realization(r, spec)?;
    let targets = predict_range(r, f, 0, 1, spec.horizon());
    let p = WindowProblem::new(spec, targets, spec.x0().clone());
    let solved = solve_window_warm(&p, opts.tol, opts.max_iter, None)?;
    let trajectory = Trajectory::new(solved.actions);
    let cost = spec.eval_cost(&r.y, &trajectory)?;
    Ok(AlgorithmRun {
        name: PolicyName::Open,
        trajectory,
        cost,
        w: None,
    })
}

/// Offline dynamic optimum on the realized targets.
pub fn run_opt(r: &Realization, spec: &ProblemSpec) -> Result<AlgorithmRun> {
    Ok(run_opt_with(r, spec, &RunOptions::default())?.0)
}

pub fn run_opt_with(
    r: &Realization,
    spec: &ProblemSpec,
    opts: &RunOptions,
) -> Result<(AlgorithmRun, SolveResult)> {
    check_realization(r, spec)?;
    let solved = solver::solve_opt(spec, &r.y, opts.tol, opts.max_iter)?;
    let trajectory = Trajectory::new(solved.actions.clone());
    let cost = spec.eval_cost(&r.y, &trajectory)?;
    Ok((
        AlgorithmRun {
            name: PolicyName::Opt,
            trajectory,
            cost,
            w: None,
        },
        solved,
    ))
}

/// Offline optimal static action, repeated over the horizon.
pub fn run_sta(r: &Realization, spec: &ProblemSpec) -> Result<AlgorithmRun> {
    check_realization(r, spec)?;
    let sol = static_optimum(spec, &r.y)?;
    let trajectory = Trajectory::new(vec![sol.x.clone(); spec.horizon()]);
    let cost = spec.eval_cost(&r.y, &trajectory)?;
    Ok(AlgorithmRun {
        name: PolicyName::Sta,
        trajectory,
        cost,
        w: None,
    })
}

/// Receding Horizon Control baseline: at each `t` solve `[t, min(t+w, T)]`
/// against the freshest predictions and commit only the first action.
pub fn run_rhc(
    w: usize,
    r: &Realization,
    spec: &ProblemSpec,
    f: &ImpulseResponse,
) -> Result<AlgorithmRun> {
    run_rhc_with(w, r, spec, f, &RunOptions::default())
}

pub fn run_rhc_with(
    w: usize,
    r: &Realization,
    spec: &ProblemSpec,
    f: &ImpulseResponse,
    opts: &RunOptions,
) -> Result<AlgorithmRun> {
    check_realization(r, spec)?;
    let horizon = spec.horizon();
    let n = spec.n();
    let mut actions: Vec<DVector<f64>> = Vec::with_capacity(horizon);
    let mut x_prev = spec.x0().clone();
    let mut prev_solution: Option<Vec<DVector<f64>>> = None;
    for t in 1..=horizon {
        let hi = (t + w).min(horizon);
        let targets = predict_range(r, f, t - 1, t, hi);
        let len = targets.len();
        // Warm start from the previous window's tail shifted by one step.
        let warm = prev_solution.as_ref().map(|prev| {
            let mut x: Vec<DVector<f64>> = prev.iter().skip(1).cloned().collect();
            while x.len() < len {
                x.push(prev.last().cloned().unwrap_or_else(|| DVector::zeros(n)));
            }
            x.truncate(len);
            let mut z = Vec::with_capacity(len);
            let mut last = x_prev.clone();
            for x_t in &x {
                z.push(x_t - &last);
                last = x_t.clone();
            }
            WarmStart {
                x,
                z,
                u: vec![DVector::zeros(n); len],
                rho: spec.beta(),
            }
        });
        let p = WindowProblem::new(spec, targets, x_prev.clone());
        let solved =
            solve_window_warm(&p, opts.tol, opts.max_iter, warm.as_ref()).map_err(|e| {
                Error::Window {
                    window: t,
                    source: Box::new(e),
                }
            })?;
        x_prev = solved.actions[0].clone();
        actions.push(x_prev.clone());
        prev_solution = Some(solved.actions);
    }
    let trajectory = Trajectory::new(actions);
    let cost = spec.eval_cost(&r.y, &trajectory)?;
    Ok(AlgorithmRun {
        name: PolicyName::Rhc,
        trajectory,
        cost,
        w: Some(w),
    })
}
