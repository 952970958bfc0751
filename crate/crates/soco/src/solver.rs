//! Convex subproblem engine.
//!
//! Every policy in this crate reduces to the same window problem:
//!
//! ```text
//! min_{x_1..x_W}  Σ_t ½‖y_t − K x_t‖² + β‖x_t − x_{t−1}‖₁,   x_0 = x_prev.
//! ```
//!
//! The solver is an operator-splitting (ADMM) method on the auxiliary
//! variables `z_t = x_t − x_{t−1}`: the quadratic block is a symmetric
//! block-tridiagonal system solved by a factored block Thomas recursion,
//! the `z` update is coordinatewise soft-thresholding at `β/ρ`, and the
//! penalty `ρ` is adapted by residual balancing. Duals `λ_t` are recovered
//! from the stationarity condition `KᵀK x_t − Kᵀ y_t + λ_t − λ_{t+1} = 0`
//! as backward cumulative residuals, so the returned stationarity residual
//! is zero by construction and optimality is certified through the dual box
//! constraint `|λ_{t,i}| ≤ β` and the complementary-slackness gap.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::problem::{KahanSum, ProblemSpec, Trajectory};
use crate::{Error, Result};

/// Default solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 50_000;

/// Cadence (in iterations) of residual-balancing checks.
const RHO_ADAPT_PERIOD: usize = 25;
/// Primal/dual residual ratio that triggers a factor-2 penalty update.
const RHO_ADAPT_RATIO: f64 = 10.0;

/// One window subproblem: targets (true or predicted), the action before
/// the window, and the owning instance.
#[derive(Debug, Clone)]
pub struct WindowProblem<'a> {
    pub spec: &'a ProblemSpec,
    pub targets: Vec<DVector<f64>>,
    pub x_prev: DVector<f64>,
}

impl<'a> WindowProblem<'a> {
    pub fn new(spec: &'a ProblemSpec, targets: Vec<DVector<f64>>, x_prev: DVector<f64>) -> Self {
        WindowProblem {
            spec,
            targets,
            x_prev,
        }
    }

    pub fn window_len(&self) -> usize {
        self.targets.len()
    }
}

/// Converged (or best) iterate of a window solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub actions: Vec<DVector<f64>>,
    pub objective: f64,
    /// λ_t from the window Lagrangian, recovered at exit; λ beyond the
    /// window is zero.
    pub duals: Vec<DVector<f64>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Warm-start state carried between related window solves.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub x: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub rho: f64,
}

/// Window objective `Σ ½‖y_t − Kx_t‖² + β‖x_t − x_{t−1}‖₁`.
fn window_objective(p: &WindowProblem, actions: &[DVector<f64>]) -> f64 {
    let mut acc = KahanSum::new();
    let mut prev = &p.x_prev;
    for (y_t, x_t) in p.targets.iter().zip(actions) {
        acc.add(0.5 * (y_t - p.spec.k() * x_t).norm_squared());
        let mut step = 0.0;
        for i in 0..x_t.len() {
            step += (x_t[i] - prev[i]).abs();
        }
        acc.add(p.spec.beta() * step);
        prev = x_t;
    }
    acc.value()
}

/// Duals from the stationarity recursion: λ_t = Σ_{r≥t} Kᵀ(y_r − K x_r).
fn recover_duals(p: &WindowProblem, actions: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = p.spec.n();
    let w = actions.len();
    let mut duals = vec![DVector::zeros(n); w];
    let mut acc = DVector::<f64>::zeros(n);
    for t in (0..w).rev() {
        let resid = p.spec.k().transpose() * (&p.targets[t] - p.spec.k() * &actions[t]);
        acc += resid;
        duals[t] = acc.clone();
    }
    duals
}

#[inline]
fn soft_threshold(v: f64, kappa: f64) -> f64 {
    // Exact zero crossings resolve to 0.
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}

/// Solves one window problem. Deterministic given its inputs.
pub fn solve_window(p: &WindowProblem, tol: f64, max_iter: usize) -> Result<SolveResult> {
    solve_window_warm(p, tol, max_iter, None)
}

/// As [`solve_window`], optionally starting from a previous iterate.
pub fn solve_window_warm(
    p: &WindowProblem,
    tol: f64,
    max_iter: usize,
    warm: Option<&WarmStart>,
) -> Result<SolveResult> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    let w = p.window_len();
    if w == 0 {
        return Err(Error::Dimension("window must have at least one step".into()));
    }
    let (m, n) = (p.spec.m(), p.spec.n());
    for y_t in &p.targets {
        if y_t.len() != m {
            return Err(Error::Dimension("target dimension mismatch".into()));
        }
    }
    if p.x_prev.len() != n {
        return Err(Error::Dimension("x_prev dimension mismatch".into()));
    }

    // β = 0 decouples the rounds: exact per-step least squares.
    if p.spec.beta() == 0.0 {
        let actions: Vec<_> = p
            .targets
            .iter()
            .map(|y_t| &p.spec.ops().k_pinv * y_t)
            .collect();
        let objective = window_objective(p, &actions);
        let duals = recover_duals(p, &actions);
        return Ok(SolveResult {
            actions,
            objective,
            duals,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
        });
    }

    if p.spec.is_scalar() {
        scalar::solve(p, tol, max_iter, warm)
    } else {
        general::solve(p, tol, max_iter, warm)
    }
}

/// Scalar (m = n = 1) ADMM path. Allocation-free in the iteration loop.
mod scalar {
    use super::*;

    struct Factors {
        /// Thomas pivots w_t = d_t − ρ²/w_{t−1}.
        pivots: Vec<f64>,
        rho: f64,
    }

    fn factor(ktk: f64, rho: f64, len: usize, pivots: &mut Vec<f64>) {
        pivots.clear();
        let mut prev = 0.0;
        for t in 0..len {
            let diag = if t + 1 < len { ktk + 2.0 * rho } else { ktk + rho };
            let w = if t == 0 { diag } else { diag - rho * rho / prev };
            pivots.push(w);
            prev = w;
        }
    }

    /// Solves the tridiagonal system in place (rhs becomes the solution).
    fn thomas_solve(f: &Factors, rhs: &mut [f64], scratch: &mut [f64]) {
        let len = rhs.len();
        let rho = f.rho;
        scratch[0] = rhs[0] / f.pivots[0];
        for t in 1..len {
            scratch[t] = (rhs[t] + rho * scratch[t - 1]) / f.pivots[t];
        }
        rhs[len - 1] = scratch[len - 1];
        for t in (0..len - 1).rev() {
            rhs[t] = scratch[t] + rho * rhs[t + 1] / f.pivots[t];
        }
    }

    pub(super) fn solve(
        p: &WindowProblem,
        tol: f64,
        max_iter: usize,
        warm: Option<&WarmStart>,
    ) -> Result<SolveResult> {
        let w_len = p.window_len();
        let k = p.spec.k()[(0, 0)];
        let ktk = k * k;
        let beta = p.spec.beta();
        let x_prev = p.x_prev[0];
        let y: Vec<f64> = p.targets.iter().map(|v| v[0]).collect();
        let kty: Vec<f64> = y.iter().map(|v| k * v).collect();

        let norm_y = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = 1.0 + norm_y;

        let mut x = vec![x_prev; w_len];
        let mut z = vec![0.0; w_len];
        let mut u = vec![0.0; w_len];
        let mut rho = beta;
        if let Some(ws) = warm {
            if ws.x.len() == w_len {
                for t in 0..w_len {
                    x[t] = ws.x[t][0];
                    z[t] = ws.z[t][0];
                    u[t] = ws.u[t][0];
                }
                rho = ws.rho;
            }
        }

        let mut factors = Factors {
            pivots: Vec::with_capacity(w_len),
            rho,
        };
        factor(ktk, rho, w_len, &mut factors.pivots);

        let mut rhs = vec![0.0; w_len];
        let mut scratch = vec![0.0; w_len];
        let mut z_old = vec![0.0; w_len];

        let mut r_pri = f64::INFINITY;
        let mut r_dual = f64::INFINITY;
        let mut iterations = 0;

        for iter in 1..=max_iter {
            iterations = iter;

            // x-update: tridiagonal normal equations with v = z − u.
            for t in 0..w_len {
                let v_t = z[t] - u[t];
                let v_next = if t + 1 < w_len { z[t + 1] - u[t + 1] } else { 0.0 };
                rhs[t] = kty[t] + rho * (v_t - v_next);
            }
            rhs[0] += rho * x_prev;
            thomas_solve(&factors, &mut rhs, &mut scratch);
            std::mem::swap(&mut x, &mut rhs);

            // z-update: soft threshold at β/ρ; u-update follows.
            z_old.copy_from_slice(&z);
            let kappa = beta / rho;
            let mut pri_sq = 0.0;
            for t in 0..w_len {
                let dx = x[t] - if t == 0 { x_prev } else { x[t - 1] };
                let zt = soft_threshold(dx + u[t], kappa);
                z[t] = zt;
                u[t] += dx - zt;
                let r = dx - zt;
                pri_sq += r * r;
            }
            r_pri = pri_sq.sqrt();

            let mut dual_sq = 0.0;
            for t in 0..w_len {
                let dz = z[t] - z_old[t];
                let dz_next = if t + 1 < w_len { z[t + 1] - z_old[t + 1] } else { 0.0 };
                let s = rho * (dz - dz_next);
                dual_sq += s * s;
            }
            r_dual = dual_sq.sqrt();

            let eps = tol * scale;
            if r_pri <= eps && r_dual <= eps {
                // KKT certificate on the x iterate.
                let mut acc = 0.0;
                let mut feas: f64 = 0.0;
                let mut gap = 0.0;
                for t in (0..w_len).rev() {
                    acc += kty[t] - ktk * x[t];
                    feas = feas.max(acc.abs() - beta);
                    let dx = x[t] - if t == 0 { x_prev } else { x[t - 1] };
                    gap += beta * dx.abs() - acc * dx;
                }
                if feas <= eps && gap.abs() <= eps {
                    break;
                }
            }

            if iter % RHO_ADAPT_PERIOD == 0 {
                if r_pri > RHO_ADAPT_RATIO * r_dual && r_dual.is_finite() {
                    rho *= 2.0;
                    for u_t in u.iter_mut() {
                        *u_t *= 0.5;
                    }
                    factors.rho = rho;
                    factor(ktk, rho, w_len, &mut factors.pivots);
                } else if r_dual > RHO_ADAPT_RATIO * r_pri {
                    rho *= 0.5;
                    for u_t in u.iter_mut() {
                        *u_t *= 2.0;
                    }
                    factors.rho = rho;
                    factor(ktk, rho, w_len, &mut factors.pivots);
                }
            }

            if iter == max_iter {
                let actions: Vec<_> = x.iter().map(|&v| DVector::from_element(1, v)).collect();
                let objective = window_objective(p, &actions);
                let duals = recover_duals(p, &actions);
                return Err(Error::MaxIterations {
                    max_iter,
                    primal: r_pri,
                    dual: r_dual,
                    best: Box::new(SolveResult {
                        actions,
                        objective,
                        duals,
                        iterations,
                        primal_residual: r_pri,
                        dual_residual: r_dual,
                    }),
                });
            }
        }

        let actions: Vec<_> = x.iter().map(|&v| DVector::from_element(1, v)).collect();
        let objective = window_objective(p, &actions);
        let duals = recover_duals(p, &actions);
        Ok(SolveResult {
            actions,
            objective,
            duals,
            iterations,
            primal_residual: r_pri,
            dual_residual: r_dual,
        })
    }
}

/// General (vector) ADMM path with block-tridiagonal factorizations.
mod general {
    use super::*;

    struct BlockFactors {
        /// Cholesky factors of the Thomas pivots w_t.
        chol: Vec<Cholesky<f64, nalgebra::Dyn>>,
        /// Explicit w_t⁻¹ for the back-substitution matvec.
        inv: Vec<DMatrix<f64>>,
    }

    fn factor(ktk: &DMatrix<f64>, rho: f64, len: usize) -> BlockFactors {
        let n = ktk.nrows();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut chol = Vec::with_capacity(len);
        let mut inv: Vec<DMatrix<f64>> = Vec::with_capacity(len);
        for t in 0..len {
            let mult = if t + 1 < len { 2.0 } else { 1.0 };
            let mut w = ktk + &eye * (mult * rho);
            if t > 0 {
                w -= &inv[t - 1] * (rho * rho);
            }
            let c = Cholesky::new(w.clone())
                .expect("pivot blocks are positive definite for rho > 0");
            inv.push(c.inverse());
            chol.push(c);
        }
        BlockFactors { chol, inv }
    }

    fn thomas_solve(f: &BlockFactors, rho: f64, rhs: &mut [DVector<f64>]) {
        let len = rhs.len();
        let mut fwd: Vec<DVector<f64>> = Vec::with_capacity(len);
        for t in 0..len {
            let mut b = rhs[t].clone();
            if t > 0 {
                b.axpy(rho, &fwd[t - 1], 1.0);
            }
            fwd.push(f.chol[t].solve(&b));
        }
        rhs[len - 1] = fwd[len - 1].clone();
        for t in (0..len - 1).rev() {
            let mut x_t = fwd[t].clone();
            x_t.gemv(rho, &f.inv[t], &rhs[t + 1], 1.0);
            rhs[t] = x_t;
        }
    }

    pub(super) fn solve(
        p: &WindowProblem,
        tol: f64,
        max_iter: usize,
        warm: Option<&WarmStart>,
    ) -> Result<SolveResult> {
        let w_len = p.window_len();
        let n = p.spec.n();
        let k = p.spec.k();
        let ktk = k.transpose() * k;
        let beta = p.spec.beta();
        let kty: Vec<DVector<f64>> = p.targets.iter().map(|y| k.transpose() * y).collect();

        let norm_y = p
            .targets
            .iter()
            .map(|v| v.norm_squared())
            .sum::<f64>()
            .sqrt();
        let scale = 1.0 + norm_y;

        let mut x = vec![p.x_prev.clone(); w_len];
        let mut z = vec![DVector::<f64>::zeros(n); w_len];
        let mut u = vec![DVector::<f64>::zeros(n); w_len];
        let mut rho = beta;
        if let Some(ws) = warm {
            if ws.x.len() == w_len {
                x.clone_from_slice(&ws.x);
                z.clone_from_slice(&ws.z);
                u.clone_from_slice(&ws.u);
                rho = ws.rho;
            }
        }
        let mut factors = factor(&ktk, rho, w_len);

        let mut rhs = vec![DVector::<f64>::zeros(n); w_len];
        let mut z_old = vec![DVector::<f64>::zeros(n); w_len];

        let mut r_pri = f64::INFINITY;
        let mut r_dual = f64::INFINITY;
        let mut iterations = 0;

        for iter in 1..=max_iter {
            iterations = iter;

            for t in 0..w_len {
                let mut b = kty[t].clone();
                b.axpy(rho, &z[t], 1.0);
                b.axpy(-rho, &u[t], 1.0);
                if t + 1 < w_len {
                    b.axpy(-rho, &z[t + 1], 1.0);
                    b.axpy(rho, &u[t + 1], 1.0);
                }
                if t == 0 {
                    b.axpy(rho, &p.x_prev, 1.0);
                }
                rhs[t] = b;
            }
            thomas_solve(&factors, rho, &mut rhs);
            std::mem::swap(&mut x, &mut rhs);

            for t in 0..w_len {
                z_old[t].copy_from(&z[t]);
            }
            let kappa = beta / rho;
            let mut pri_sq = 0.0;
            for t in 0..w_len {
                let prev = if t == 0 { &p.x_prev } else { &x[t - 1] };
                for i in 0..n {
                    let dx = x[t][i] - prev[i];
                    let zt = soft_threshold(dx + u[t][i], kappa);
                    z[t][i] = zt;
                    u[t][i] += dx - zt;
                    let r = dx - zt;
                    pri_sq += r * r;
                }
            }
            r_pri = pri_sq.sqrt();

            let mut dual_sq = 0.0;
            for t in 0..w_len {
                for i in 0..n {
                    let dz = z[t][i] - z_old[t][i];
                    let dz_next = if t + 1 < w_len {
                        z[t + 1][i] - z_old[t + 1][i]
                    } else {
                        0.0
                    };
                    let s = rho * (dz - dz_next);
                    dual_sq += s * s;
                }
            }
            r_dual = dual_sq.sqrt();

            let eps = tol * scale;
            if r_pri <= eps && r_dual <= eps {
                let mut acc = DVector::<f64>::zeros(n);
                let mut feas: f64 = 0.0;
                let mut gap = 0.0;
                for t in (0..w_len).rev() {
                    acc += &kty[t] - &ktk * &x[t];
                    let prev = if t == 0 { &p.x_prev } else { &x[t - 1] };
                    for i in 0..n {
                        feas = feas.max(acc[i].abs() - beta);
                        let dx = x[t][i] - prev[i];
                        gap += beta * dx.abs() - acc[i] * dx;
                    }
                }
                if feas <= eps && gap.abs() <= eps {
                    break;
                }
            }

            if iter % RHO_ADAPT_PERIOD == 0 {
                let mut changed = false;
                if r_pri > RHO_ADAPT_RATIO * r_dual && r_dual.is_finite() {
                    rho *= 2.0;
                    for u_t in u.iter_mut() {
                        *u_t *= 0.5;
                    }
                    changed = true;
                } else if r_dual > RHO_ADAPT_RATIO * r_pri {
                    rho *= 0.5;
                    for u_t in u.iter_mut() {
                        *u_t *= 2.0;
                    }
                    changed = true;
                }
                if changed {
                    factors = factor(&ktk, rho, w_len);
                }
            }

            if iter == max_iter {
                let objective = window_objective(p, &x);
                let duals = recover_duals(p, &x);
                return Err(Error::MaxIterations {
                    max_iter,
                    primal: r_pri,
                    dual: r_dual,
                    best: Box::new(SolveResult {
                        actions: x,
                        objective,
                        duals,
                        iterations,
                        primal_residual: r_pri,
                        dual_residual: r_dual,
                    }),
                });
            }
        }

        let objective = window_objective(p, &x);
        let duals = recover_duals(p, &x);
        Ok(SolveResult {
            actions: x,
            objective,
            duals,
            iterations,
            primal_residual: r_pri,
            dual_residual: r_dual,
        })
    }
}

/// Offline dynamic optimum: the full-horizon window from `x_0 = 0`.
///
/// After convergence the dual value
/// `Σ ½‖y_t‖² − ½‖KK†y_t − (Kᵀ)†s_t‖²` is verified against the primal
/// objective to `1e-6` relative.
pub fn solve_opt(
    spec: &ProblemSpec,
    y: &[DVector<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<SolveResult> {
    if y.len() != spec.horizon() {
        return Err(Error::Dimension(format!(
            "solve_opt: got {} targets for horizon {}",
            y.len(),
            spec.horizon()
        )));
    }
    let p = WindowProblem::new(spec, y.to_vec(), spec.x0().clone());
    let result = solve_window(&p, tol, max_iter)?;
    let dual = opt_dual_cost(spec, y, &result.duals);
    let gap = (dual - result.objective).abs();
    if gap > 1e-6 * (1.0 + result.objective.abs()) {
        return Err(Error::CheckFailed(format!(
            "dual identity violated: primal {} vs dual {dual} (gap {gap:.3e})",
            result.objective
        )));
    }
    Ok(result)
}

/// Dual expression of the optimal value:
/// `Σ_t ½‖y_t‖² − ½‖KK†y_t − (Kᵀ)† s_t‖²` with `s_t = λ_t − λ_{t+1}`.
pub fn opt_dual_cost(spec: &ProblemSpec, y: &[DVector<f64>], duals: &[DVector<f64>]) -> f64 {
    let ops = spec.ops();
    let mut acc = KahanSum::new();
    let horizon = y.len();
    for t in 0..horizon {
        let s_t = if t + 1 < duals.len() {
            &duals[t] - &duals[t + 1]
        } else {
            duals[t].clone()
        };
        let inner = &ops.proj_range * &y[t] - &ops.kt_pinv * s_t;
        acc.add(0.5 * y[t].norm_squared() - 0.5 * inner.norm_squared());
    }
    acc.value()
}

/// Which branch produced the static optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticBranch {
    /// `x = K†ȳ − (β/T)(KᵀK)⁻¹𝟙`, valid when every coordinate is ≥ 0.
    ClosedForm,
    /// Numeric minimization of `Σ ½‖y_t − Kx‖² + β‖x‖₁`.
    Numeric,
}

/// Offline optimal static (constant) action and its cost.
#[derive(Debug, Clone)]
pub struct StaticSolution {
    pub x: DVector<f64>,
    pub cost: f64,
    pub branch: StaticBranch,
}

/// Computes the static optimum, preferring the closed form when its
/// positivity assumption holds and falling back to a numeric solve of the
/// equivalent one-step window `min_x ½‖√T ȳ − √T K x‖² + β‖x‖₁`.
pub fn static_optimum(spec: &ProblemSpec, y: &[DVector<f64>]) -> Result<StaticSolution> {
    if y.len() != spec.horizon() {
        return Err(Error::Dimension(format!(
            "static_optimum: got {} targets for horizon {}",
            y.len(),
            spec.horizon()
        )));
    }
    let t = spec.horizon() as f64;
    let mut y_bar = DVector::<f64>::zeros(spec.m());
    for y_t in y {
        y_bar += y_t;
    }
    y_bar /= t;

    let ones = DVector::from_element(spec.n(), 1.0);
    let closed =
        &spec.ops().k_pinv * &y_bar - (&spec.ops().gram_inv * &ones) * (spec.beta() / t);
    let x = if closed.iter().all(|&v| v >= 0.0) {
        StaticSolution {
            x: closed,
            cost: 0.0,
            branch: StaticBranch::ClosedForm,
        }
    } else {
        let scaled_spec = ProblemSpec::new(spec.k() * t.sqrt(), spec.beta(), 1)?;
        let target = vec![&y_bar * t.sqrt()];
        let p = WindowProblem::new(&scaled_spec, target, DVector::zeros(spec.n()));
        let solved = solve_window(&p, 1e-10, DEFAULT_MAX_ITER)?;
        StaticSolution {
            x: solved.actions[0].clone(),
            cost: 0.0,
            branch: StaticBranch::Numeric,
        }
    };
    let traj = Trajectory::new(vec![x.x.clone(); spec.horizon()]);
    let cost = spec.eval_cost(y, &traj)?.total();
    Ok(StaticSolution { cost, ..x })
}

/// Maximum size `n·T` accepted by the tensor-grid oracle.
const GRID_LIMIT: usize = 6;
/// Iterations of the projected-subgradient fallback oracle.
const SUBGRADIENT_ITERS: usize = 1_000_000;

/// Brute-force oracle for validating [`solve_window`] on tiny instances.
///
/// Scalar instances use an exact lattice dynamic program (the objective is
/// stagewise separable, so the lattice DP equals the exhaustive grid);
/// small vector instances enumerate a tensor grid; anything larger falls
/// back to a long projected-subgradient run. Independent of the ADMM path.
pub fn brute_force_oracle(
    spec: &ProblemSpec,
    y: &[DVector<f64>],
    grid_resolution: f64,
) -> Result<SolveResult> {
    if y.len() != spec.horizon() {
        return Err(Error::Dimension("target count != horizon".into()));
    }
    if grid_resolution <= 0.0 {
        return Err(Error::InvalidArgument("grid_resolution must be > 0".into()));
    }
    if spec.n() == 1 && spec.m() == 1 {
        return oracle_scalar_dp(spec, y, grid_resolution);
    }
    if spec.n() * spec.horizon() <= GRID_LIMIT {
        return oracle_tensor_grid(spec, y, grid_resolution);
    }
    oracle_subgradient(spec, y)
}

fn oracle_scalar_dp(
    spec: &ProblemSpec,
    y: &[DVector<f64>],
    res: f64,
) -> Result<SolveResult> {
    let k = spec.k()[(0, 0)];
    let beta = spec.beta();
    let horizon = spec.horizon();
    let targets: Vec<f64> = y.iter().map(|v| v[0]).collect();
    let ideal: Vec<f64> = targets.iter().map(|&v| v / k).collect();
    let lo = ideal.iter().cloned().fold(0.0f64, f64::min) - res;
    let hi = ideal.iter().cloned().fold(0.0f64, f64::max) + res;
    let cells = (((hi - lo) / res).ceil() as usize).max(1) + 1;
    let grid: Vec<f64> = (0..cells).map(|i| lo + i as f64 * res).collect();

    // value[i]: best cost-to-t ending at grid[i]; parent pointers recover
    // the argmin. The ℓ1 transition min is a two-pass distance transform.
    let mut value: Vec<f64> = grid
        .iter()
        .map(|&g| {
            let r = targets[0] - k * g;
            0.5 * r * r + beta * g.abs()
        })
        .collect();
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(horizon);
    parents.push((0..cells).collect());

    let step = beta * res;
    let mut best_from = vec![0usize; cells];
    for &target in targets.iter().skip(1) {
        // forward/backward envelope of value + β|Δ| on the lattice
        let mut env = value.clone();
        for (i, b) in best_from.iter_mut().enumerate() {
            *b = i;
        }
        for i in 1..cells {
            if env[i - 1] + step < env[i] {
                env[i] = env[i - 1] + step;
                best_from[i] = best_from[i - 1];
            }
        }
        for i in (0..cells - 1).rev() {
            if env[i + 1] + step < env[i] {
                env[i] = env[i + 1] + step;
                best_from[i] = best_from[i + 1];
            }
        }
        for i in 0..cells {
            let r = target - k * grid[i];
            value[i] = env[i] + 0.5 * r * r;
        }
        parents.push(best_from.clone());
    }

    let (mut best_i, mut best_v) = (0usize, f64::INFINITY);
    for (i, &v) in value.iter().enumerate() {
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut idx = vec![0usize; horizon];
    idx[horizon - 1] = best_i;
    for t in (0..horizon - 1).rev() {
        idx[t] = parents[t + 1][idx[t + 1]];
    }
    let actions: Vec<_> = idx
        .iter()
        .map(|&i| DVector::from_element(1, grid[i]))
        .collect();
    let p = WindowProblem::new(spec, y.to_vec(), spec.x0().clone());
    let objective = window_objective(&p, &actions);
    Ok(SolveResult {
        actions,
        objective,
        duals: Vec::new(),
        iterations: cells,
        primal_residual: 0.0,
        dual_residual: 0.0,
    })
}

fn oracle_tensor_grid(
    spec: &ProblemSpec,
    y: &[DVector<f64>],
    res: f64,
) -> Result<SolveResult> {
    let n = spec.n();
    let horizon = spec.horizon();
    let dims = n * horizon;
    if dims > GRID_LIMIT {
        return Err(Error::InstanceTooLarge {
            size: dims,
            limit: GRID_LIMIT,
        });
    }
    // Per-coordinate range from the unconstrained per-step solutions.
    let mut lo = vec![0.0f64; n];
    let mut hi = vec![0.0f64; n];
    for y_t in y {
        let ideal = &spec.ops().k_pinv * y_t;
        for i in 0..n {
            lo[i] = lo[i].min(ideal[i]);
            hi[i] = hi[i].max(ideal[i]);
        }
    }
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let span = hi[i] - lo[i] + 2.0 * res;
            let cells = ((span / res).ceil() as usize).max(1) + 1;
            (0..cells).map(|c| lo[i] - res + c as f64 * res).collect()
        })
        .collect();
    let mut counters = vec![0usize; dims];
    let sizes: Vec<usize> = (0..dims).map(|d| axes[d % n].len()).collect();
    let p = WindowProblem::new(spec, y.to_vec(), spec.x0().clone());
    let mut best_v = f64::INFINITY;
    let mut best_actions: Option<Vec<DVector<f64>>> = None;
    let mut actions = vec![DVector::<f64>::zeros(n); horizon];
    'outer: loop {
        for t in 0..horizon {
            for i in 0..n {
                actions[t][i] = axes[i][counters[t * n + i]];
            }
        }
        let v = window_objective(&p, &actions);
        if v < best_v {
            best_v = v;
            best_actions = Some(actions.clone());
        }
        // odometer increment
        let mut d = 0;
        loop {
            counters[d] += 1;
            if counters[d] < sizes[d] {
                break;
            }
            counters[d] = 0;
            d += 1;
            if d == dims {
                break 'outer;
            }
        }
    }
    Ok(SolveResult {
        actions: best_actions.unwrap(),
        objective: best_v,
        duals: Vec::new(),
        iterations: sizes.iter().product(),
        primal_residual: 0.0,
        dual_residual: 0.0,
    })
}

fn oracle_subgradient(spec: &ProblemSpec, y: &[DVector<f64>]) -> Result<SolveResult> {
    let n = spec.n();
    let horizon = spec.horizon();
    let k = spec.k();
    let mut x = vec![DVector::<f64>::zeros(n); horizon];
    let mut best = x.clone();
    let p = WindowProblem::new(spec, y.to_vec(), spec.x0().clone());
    let mut best_v = window_objective(&p, &x);
    let scale = (1.0 + y.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()) / horizon as f64;
    for iter in 1..=SUBGRADIENT_ITERS {
        let step = scale / (iter as f64).sqrt();
        let mut grad = vec![DVector::<f64>::zeros(n); horizon];
        for t in 0..horizon {
            grad[t] += k.transpose() * (k * &x[t] - &y[t]);
            let prev = if t == 0 { spec.x0() } else { &x[t - 1] };
            for i in 0..n {
                let d = x[t][i] - prev[i];
                let s = spec.beta() * d.signum();
                grad[t][i] += s;
                if t > 0 {
                    grad[t - 1][i] -= s;
                }
            }
        }
        for t in 0..horizon {
            x[t].axpy(-step, &grad[t], 1.0);
        }
        // Evaluating every iterate would dominate; sample the trajectory.
        if iter % 100 == 0 || iter == SUBGRADIENT_ITERS {
            let v = window_objective(&p, &x);
            if v < best_v {
                best_v = v;
                best.clone_from_slice(&x);
            }
        }
    }
    Ok(SolveResult {
        actions: best,
        objective: best_v,
        duals: Vec::new(),
        iterations: SUBGRADIENT_ITERS,
        primal_residual: 0.0,
        dual_residual: 0.0,
    })
}
