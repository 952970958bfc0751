//! Theoretical quantities and empirical metrics.
//!
//! The average-case analysis of AFHC(w+1) is driven by two constants,
//!
//! ```text
//! V = (β‖K†‖₁‖f_w‖ + 3β²‖(KᵀK)⁻¹𝟙‖ + F(w)/2) / (w+1),
//! B = β‖(Kᵀ)†𝟙‖₂,
//! ```
//!
//! with the expected competitive difference bounded by `V·T` and sublinear
//! regret guaranteed once the target variation clears `(8V + 16B²)T`. The
//! suboptimality of AFHC splits per realization into a switching part `g₁`
//! and a prediction-error part `g₂ = ½‖Ae‖²` for a block-structured matrix
//! `A`; concentration of both parts yields Bernstein-type tails for the
//! competitive difference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algorithms::{fhc_windows, AfhcOutput, AlgorithmRun, PolicyName};
use crate::prediction::{
    big_f, fw_norm_sq, predict_range, ImpulseResponse, NoiseSpec, Realization,
};
use crate::problem::{CostBreakdown, KahanSum, ProblemSpec};
use crate::rng::mix_seed;
use crate::{Error, Result};

/// Which vector norm to use for the `‖(KᵀK)⁻¹𝟙‖` factor of `V`.
///
/// The derivation of the switching term carries the 1-norm, which is the
/// primary variant; the 2-norm is exposed for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GramNormVariant {
    #[default]
    One,
    Two,
}

/// Induced matrix 1-norm (max column abs sum).
fn induced_one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Per-step competitive-difference constant `V` (primary 1-norm variant).
pub fn bound_v(spec: &ProblemSpec, f: &ImpulseResponse, noise: &NoiseSpec, w: usize) -> f64 {
    bound_v_with(spec, f, noise, w, GramNormVariant::One)
}

pub fn bound_v_with(
    spec: &ProblemSpec,
    f: &ImpulseResponse,
    noise: &NoiseSpec,
    w: usize,
    variant: GramNormVariant,
) -> f64 {
    let ops = spec.ops();
    let beta = spec.beta();
    let fw = fw_norm_sq(f, noise, w).sqrt();
    let gram_one = &ops.gram_inv * DVector::from_element(spec.n(), 1.0);
    let gram_norm = match variant {
        GramNormVariant::One => gram_one.iter().map(|v| v.abs()).sum::<f64>(),
        GramNormVariant::Two => gram_one.norm(),
    };
    let fw_big = big_f(f, noise, ops, w);
    (beta * induced_one_norm(&ops.k_pinv) * fw + 3.0 * beta * beta * gram_norm + fw_big / 2.0)
        / (w as f64 + 1.0)
}

/// `B = β‖(Kᵀ)†𝟙‖₂`.
pub fn bound_b(spec: &ProblemSpec) -> f64 {
    let ones = DVector::from_element(spec.n(), 1.0);
    spec.beta() * (&spec.ops().kt_pinv * ones).norm()
}

/// `α₁ = 4V + 8B²`.
pub fn alpha1(v: f64, b: f64) -> f64 {
    4.0 * v + 8.0 * b * b
}

/// `α₂ = ½‖R_e^{1/2}‖²_{KK†} = ½ tr(KK† R_e)`: the per-step cost floor of
/// any online algorithm whose extra information is independent of the
/// prediction noise.
pub fn alpha2(spec: &ProblemSpec, noise: &NoiseSpec) -> f64 {
    let p = &spec.ops().proj_range;
    let mut acc = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            acc += p[(i, j)] * noise.r_e[(j, i)];
        }
    }
    0.5 * acc
}

/// Window size minimizing `V` over `{0..w_max}`; ties break toward the
/// smaller window.
pub fn optimal_window(
    spec: &ProblemSpec,
    f: &ImpulseResponse,
    noise: &NoiseSpec,
    w_max: usize,
) -> usize {
    let mut best_w = 0;
    let mut best_v = f64::INFINITY;
    for w in 0..=w_max {
        let v = bound_v(spec, f, noise, w);
        if v < best_v {
            best_v = v;
            best_w = w;
        }
    }
    best_w
}

/// All theoretical quantities for one `(instance, impulse, noise, w)`.
///
/// Serializes with exactly the documented field names; instance context
/// needed to evaluate the tail bounds rides along unserialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub w: usize,
    /// `‖f_w‖` (square root of the R_e-weighted tap energy).
    pub fw_norm: f64,
    #[serde(rename = "F_w")]
    pub f_w: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(rename = "V1")]
    pub v1: f64,
    #[serde(rename = "V2")]
    pub v2: f64,
    /// `λ ≤ F(w)/σ²` (scalar instances only).
    pub lambda_bound: Option<f64>,
    /// Bernstein `a` of the simplified tail `2·exp(−u²/(a+bu))`.
    pub bern_a: Option<f64>,
    /// Bernstein `b`.
    pub bern_b: Option<f64>,
    /// Noise support half-width, when the family is bounded.
    pub epsilon: Option<f64>,
    #[serde(skip)]
    pub beta: f64,
    #[serde(skip)]
    pub sigma2: Option<f64>,
    #[serde(skip)]
    pub horizon: usize,
    /// 2-norm variant of `V` (not part of the serialized report).
    #[serde(skip)]
    pub v_two_norm: f64,
}

impl BoundReport {
    pub fn new(spec: &ProblemSpec, f: &ImpulseResponse, noise: &NoiseSpec, w: usize) -> Self {
        let t = spec.horizon() as f64;
        let beta = spec.beta();
        let fw_sq = fw_norm_sq(f, noise, w);
        let fw_norm = fw_sq.sqrt();
        let f_w = big_f(f, noise, spec.ops(), w);
        let v = bound_v(spec, f, noise, w);
        let v_two_norm = bound_v_with(spec, f, noise, w, GramNormVariant::Two);
        let b = bound_b(spec);
        let v1 = 3.0 * beta * beta * t / (w as f64 + 1.0) + beta * t * fw_norm / (w as f64 + 1.0);
        let v2 = t * f_w / (2.0 * (w as f64 + 1.0));
        let sigma2 = if spec.m() == 1 {
            Some(noise.r_e[(0, 0)])
        } else {
            None
        };
        let lambda_bound = sigma2
            .filter(|&s| s > 0.0)
            .map(|s| f_w / s);
        let epsilon = noise.epsilon;
        let bern = match (lambda_bound, epsilon, sigma2) {
            (Some(lambda), Some(eps), Some(s2)) if s2 > 0.0 => {
                let a = 8.0
                    * eps
                    * eps
                    * (t / (w as f64 + 1.0))
                    * (beta * beta * fw_sq / s2).max(4.0 * lambda * f_w);
                let b = 16.0 * eps * eps * lambda;
                Some((a, b))
            }
            _ => None,
        };
        BoundReport {
            w,
            fw_norm,
            f_w,
            v,
            b,
            alpha1: alpha1(v, b),
            alpha2: alpha2(spec, noise),
            v1,
            v2,
            lambda_bound,
            bern_a: bern.map(|p| p.0),
            bern_b: bern.map(|p| p.1),
            epsilon,
            beta,
            sigma2,
            horizon: spec.horizon(),
            v_two_norm,
        }
    }
}

/// Per-sample performance metrics of one policy run.
#[derive(Debug, Clone)]
pub struct MetricRecord {
    pub name: PolicyName,
    pub w: Option<usize>,
    pub cost: CostBreakdown,
    pub cost_opt: f64,
    pub cost_sta: f64,
    /// `cost_alg − cost_sta`.
    pub regret: f64,
    /// `cost_alg − cost_opt`.
    pub comp_diff: f64,
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub seed: u64,
}

/// The deterministic suboptimality decomposition of AFHC:
///
/// * `g₁ = (w+1)⁻¹ Σ_k Σ_{τ∈Ω_k} β‖x*_{τ−1} − x^{(k)}_{τ−1}‖₁` (switching),
/// * `g₂ = (w+1)⁻¹ Σ_k Σ_{τ∈Ω_k} Σ_{t=τ}^{τ+w} ½‖y_t − y_{t|τ−1}‖²_{KK†}`
///   (prediction error), window sums clipped at `T`.
///
/// Satisfies `cost(AFHC) − cost(OPT) ≤ g₁ + g₂` per realization.
pub fn decompose_g1_g2(
    afhc: &AfhcOutput,
    opt: &AlgorithmRun,
    r: &Realization,
    f: &ImpulseResponse,
    spec: &ProblemSpec,
) -> Result<(f64, f64)> {
    let w = afhc
        .afhc
        .w
        .ok_or_else(|| Error::InvalidArgument("AFHC run lacks its window parameter".into()))?;
    let horizon = spec.horizon();
    if afhc.components.len() != w + 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {} FHC components, got {}",
            w + 1,
            afhc.components.len()
        )));
    }
    if opt.trajectory.len() != horizon || r.horizon() != horizon {
        return Err(Error::MismatchedRealization(
            "trajectory/realization horizon mismatch".into(),
        ));
    }
    // Costs must recompute exactly against this realization's targets.
    for run in std::iter::once(opt).chain(afhc.components.iter()) {
        let again = spec.eval_cost(&r.y, &run.trajectory)?;
        if again.total().to_bits() != run.cost.total().to_bits() {
            return Err(Error::MismatchedRealization(format!(
                "{} cost does not recompute against this realization",
                run.name
            )));
        }
    }

    let weight = 1.0 / (w as f64 + 1.0);
    let mut g1 = KahanSum::new();
    let mut g2 = KahanSum::new();
    for (k, fhc_run) in afhc.components.iter().enumerate() {
        for win in fhc_windows(k, w, horizon) {
            if win.start >= 1 {
                let tau = win.start as usize;
                if tau >= 2 {
                    let x_star = &opt.trajectory.actions[tau - 2];
                    let x_k = &fhc_run.trajectory.actions[tau - 2];
                    let mut diff = 0.0;
                    for i in 0..spec.n() {
                        diff += (x_star[i] - x_k[i]).abs();
                    }
                    g1.add(spec.beta() * diff);
                }
                // τ = 1 compares x₀ with x₀ and contributes zero.
            }
            let preds = predict_range(r, f, win.pred_time, win.commit_lo, win.commit_hi);
            for (offset, pred) in preds.iter().enumerate() {
                let t = win.commit_lo + offset;
                let diff = &r.y[t - 1] - pred;
                g2.add(0.5 * spec.ops().proj_seminorm_sq(&diff)?);
            }
        }
    }
    Ok((weight * g1.value(), weight * g2.value()))
}

/// Builds the block-diagonal matrix `A_k` with `g₂`-contribution
/// `½‖A_k e‖²` for the `k`-th FHC copy (scalar instances).
///
/// Each committed window `[a, b]` contributes a lower-triangular Toeplitz
/// block `A[t, s] = f(t − s)` for `a ≤ s ≤ t ≤ b`.
pub fn build_a_k(
    f: &ImpulseResponse,
    w: usize,
    horizon: usize,
    k: usize,
) -> Result<DMatrix<f64>> {
    if f.dim() != 1 {
        return Err(Error::NotScalar);
    }
    if k > w {
        return Err(Error::InvalidArgument("k must satisfy 0 <= k <= w".into()));
    }
    let mut a = DMatrix::<f64>::zeros(horizon, horizon);
    for win in fhc_windows(k, w, horizon) {
        for t in win.commit_lo..=win.commit_hi {
            for s in win.commit_lo..=t {
                if let Some(tap) = f.tap((t - s) as i64) {
                    a[(t - 1, s - 1)] = tap[(0, 0)];
                }
            }
        }
    }
    Ok(a)
}

/// Combines the copies into the symmetric square-root factor `A` with
/// `AᵀA = (w+1)⁻¹ Σ_k A_kᵀ A_k`, so `g₂ = ½‖Ae‖²`.
pub fn combine_a(a_ks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = a_ks
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one A_k".into()))?;
    let t = first.nrows();
    let mut gram = DMatrix::<f64>::zeros(t, t);
    for a_k in a_ks {
        gram += a_k.transpose() * a_k;
    }
    gram /= a_ks.len() as f64;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let root = lam.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(root);
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Convenience: `A` for the full AFHC ensemble.
pub fn build_a(f: &ImpulseResponse, w: usize, horizon: usize) -> Result<DMatrix<f64>> {
    let a_ks: Vec<_> = (0..=w)
        .map(|k| build_a_k(f, w, horizon, k))
        .collect::<Result<_>>()?;
    combine_a(&a_ks)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn power_iteration(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = m.nrows();
    // Deterministic start with a mild ramp so it is never orthogonal to the
    // top eigenvector of these nonnegative-leaning matrices.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 1e-3 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let mv = m * &v;
        let norm = mv.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = mv / norm;
        let rayleigh = (m * &next).dot(&next);
        if (rayleigh - lambda).abs() <= tol * rayleigh.abs().max(1.0) {
            return Ok(rayleigh);
        }
        lambda = rayleigh;
        v = next;
    }
    Err(Error::PowerIterationNotConverged { iters: max_iter })
}

/// `λ_max(AAᵀ)` by power iteration together with the trace bound
/// `F(w)/σ²` it must not exceed (scalar instances).
pub fn spectral_bound_check(
    a: &DMatrix<f64>,
    f: &ImpulseResponse,
    noise: &NoiseSpec,
    w: usize,
) -> Result<(f64, f64)> {
    if noise.dim() != 1 || f.dim() != 1 {
        return Err(Error::NotScalar);
    }
    let sigma2 = noise.sigma2()?;
    if sigma2 <= 0.0 {
        return Err(Error::InvalidArgument(
            "spectral bound needs sigma^2 > 0".into(),
        ));
    }
    let aat = a * a.transpose();
    let lambda_max = power_iteration(&aat, 1e-10, 100_000)?;
    // Scalar F(w)/σ² = Σ_{s=0}^w (w−s+1) f(s)².
    let mut bound = 0.0;
    for s in 0..=w.min(f.len_l()) {
        let tap = f.taps()[s][(0, 0)];
        bound += (w - s + 1) as f64 * tap * tap;
    }
    Ok((lambda_max, bound))
}

/// Two-term and simplified Bernstein tail bounds on
/// `P(cost(AFHC) − cost(OPT) > VT + u)` for bounded scalar noise.
///
/// Returns raw values; clamp to `[0,1]` when interpreting as probabilities.
pub fn conc_tail_bound(report: &BoundReport, u: f64) -> Result<(f64, f64)> {
    let eps = report.epsilon.ok_or(Error::UnboundedNoise)?;
    let lambda = report.lambda_bound.ok_or(Error::NotScalar)?;
    let sigma2 = report.sigma2.ok_or(Error::NotScalar)?;
    if u < 0.0 {
        return Err(Error::InvalidArgument("u must be nonnegative".into()));
    }
    let t = report.horizon as f64;
    let wp1 = report.w as f64 + 1.0;
    let fw_sq = report.fw_norm * report.fw_norm;
    let d1 = 8.0 * eps * eps * (report.beta * report.beta * t / (wp1 * sigma2)) * fw_sq;
    let d2 = 16.0 * eps * eps * lambda * (2.0 * t * report.f_w / wp1 + u);
    let two_term = exp_neg_ratio(u * u, d1) + exp_neg_ratio(u * u, d2);
    let (a, b) = (report.bern_a.unwrap(), report.bern_b.unwrap());
    let simplified = 2.0 * exp_neg_ratio(u * u, a + b * u);
    Ok((two_term, simplified))
}

#[inline]
fn exp_neg_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        1.0
    } else if den <= 0.0 {
        0.0
    } else {
        (-num / den).exp()
    }
}

/// Sub-Gaussian tail of the switching loss:
/// `P(g₁ > V₁ + u) ≤ exp(−u²/(2ε²β² (T/((w+1)σ²)) ‖f_w‖²))`.
///
/// `fw_sq` is the R_e-weighted squared norm `‖f_w‖²`; the σ² division
/// reduces it to the unweighted tap energy the concentration argument uses.
pub fn g1_tail_bound(
    t: usize,
    w: usize,
    beta: f64,
    eps: f64,
    fw_sq: f64,
    sigma2: f64,
    u: f64,
) -> f64 {
    let den = 2.0 * eps * eps * beta * beta * (t as f64 / ((w as f64 + 1.0) * sigma2)) * fw_sq;
    exp_neg_ratio(u * u, den)
}

/// Bernstein-type tail of the prediction-error loss:
/// `P(g₂ > V₂ + u) ≤ exp(−u²/(8ε²λ(T F(w)/(w+1) + u)))`.
pub fn g2_tail_bound(t: usize, w: usize, eps: f64, lambda: f64, f_w: f64, u: f64) -> f64 {
    let den = 8.0 * eps * eps * lambda * (t as f64 * f_w / (w as f64 + 1.0) + u);
    exp_neg_ratio(u * u, den)
}

/// Per-realization lower bound on `cost(STA) − cost(OPT)`:
/// `½(max(0, √(Σ‖y_t−ȳ‖²_{KK†}) − 2B√T))² − 2B²T − C` with
/// `C = β²𝟙ᵀ(KᵀK)⁻¹𝟙/(2T)`.
pub fn sta_gap_lower_bound(spec: &ProblemSpec, y: &[DVector<f64>]) -> Result<f64> {
    let t = y.len() as f64;
    let mut y_bar = DVector::<f64>::zeros(spec.m());
    for y_t in y {
        y_bar += y_t;
    }
    y_bar /= t;
    let mut variation = KahanSum::new();
    for y_t in y {
        variation.add(spec.ops().proj_seminorm_sq(&(y_t - &y_bar))?);
    }
    let b = bound_b(spec);
    let ones = DVector::from_element(spec.n(), 1.0);
    let c = spec.beta() * spec.beta() * (&spec.ops().gram_inv * &ones).dot(&ones) / (2.0 * t);
    let inner = (variation.value().sqrt() - 2.0 * b * t.sqrt()).max(0.0);
    Ok(0.5 * inner * inner - 2.0 * b * b * t - c)
}

/// Outcome of the sublinear-regret condition check.
#[derive(Debug, Clone)]
pub struct RegretCondition {
    /// Whether the infimum of the estimated variation clears the
    /// `(8V + 16B²)T` threshold for sublinear regret.
    pub holds: bool,
    pub infimum: f64,
    /// `(8V + 16B²)T`.
    pub threshold: f64,
    /// The companion `α₁T = (4V + 8B²)T` constant, reported alongside.
    pub alpha1_threshold: f64,
    pub per_instance: Vec<f64>,
}

/// Estimates `E_e Σ_t ‖KK†(y_t − ȳ)‖²` by Monte Carlo for each initial
/// prediction sequence in the family and compares the infimum against the
/// sublinear-regret threshold.
pub fn regret_condition_check(
    spec: &ProblemSpec,
    f: &ImpulseResponse,
    noise: &NoiseSpec,
    y_hat_family: &[Vec<DVector<f64>>],
    w: usize,
    samples: usize,
    seed: u64,
) -> Result<RegretCondition> {
    if y_hat_family.is_empty() {
        return Err(Error::InvalidArgument("y_hat family is empty".into()));
    }
    let v = bound_v(spec, f, noise, w);
    let b = bound_b(spec);
    let t = spec.horizon() as f64;
    let threshold = (8.0 * v + 16.0 * b * b) * t;
    let alpha1_threshold = alpha1(v, b) * t;
    let mut per_instance = Vec::with_capacity(y_hat_family.len());
    for (idx, y_hat) in y_hat_family.iter().enumerate() {
        if y_hat.len() != spec.horizon() {
            return Err(Error::Dimension(format!(
                "y_hat instance {idx} has length {}, expected {}",
                y_hat.len(),
                spec.horizon()
            )));
        }
        let mut acc = KahanSum::new();
        for i in 0..samples {
            let r = crate::prediction::realize(
                f,
                noise,
                y_hat.clone(),
                mix_seed(seed, (idx * samples + i) as u64),
            )?;
            let mut y_bar = DVector::<f64>::zeros(spec.m());
            for y_t in &r.y {
                y_bar += y_t;
            }
            y_bar /= t;
            let mut variation = 0.0;
            for y_t in &r.y {
                variation += spec.ops().proj_seminorm_sq(&(y_t - &y_bar))?;
            }
            acc.add(variation);
        }
        per_instance.push(acc.value() / samples as f64);
    }
    let infimum = per_instance.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RegretCondition {
        holds: infimum > threshold,
        infimum,
        threshold,
        alpha1_threshold,
        per_instance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{run_afhc, run_opt_with, RunOptions};
    use crate::prediction::realize;
    use crate::rng::CounterRng;
    use approx::assert_relative_eq;

    fn scalar_spec(beta: f64, horizon: usize) -> ProblemSpec {
        ProblemSpec::new(DMatrix::from_element(1, 1, 1.0), beta, horizon).unwrap()
    }

    #[test]
    fn v_example_iid() {
        // V = (1·1·1 + 3·1 + 5/2)/5 = 1.3 for β=σ=K=1, w=4, iid f.
        let spec = scalar_spec(1.0, 240);
        let f = ImpulseResponse::iid(1);
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        assert_relative_eq!(bound_v(&spec, &f, &noise, 4), 1.3, epsilon = 1e-12);
        // β = 0 leaves only the F(w)/2 term.
        let spec0 = ProblemSpec::new(DMatrix::from_element(1, 1, 1.0), 0.0, 240).unwrap();
        assert_relative_eq!(
            bound_v(&spec0, &f, &noise, 4),
            big_f(&f, &noise, spec0.ops(), 4) / (2.0 * 5.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn v_closed_form_scalar_iid() {
        // V(w) = σ²/2 + (βσ + 3β²)/(w+1), strictly decreasing in w.
        let spec = scalar_spec(0.7, 100);
        let f = ImpulseResponse::iid(1);
        let sigma2: f64 = 1.3;
        let noise = NoiseSpec::gaussian_scalar(sigma2).unwrap();
        let mut prev = f64::INFINITY;
        for w in 0..40 {
            let v = bound_v(&spec, &f, &noise, w);
            let closed =
                sigma2 / 2.0 + (0.7 * sigma2.sqrt() + 3.0 * 0.7 * 0.7) / (w as f64 + 1.0);
            assert_relative_eq!(v, closed, epsilon = 1e-12);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn b_and_alphas() {
        let spec = scalar_spec(1.0, 10);
        assert_relative_eq!(bound_b(&spec), 1.0);
        assert_relative_eq!(alpha1(1.3, 1.0), 13.2, epsilon = 1e-12);
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        assert_relative_eq!(alpha2(&spec, &noise), 0.5);
    }

    #[test]
    fn vt_splits_into_v1_plus_v2() {
        let spec = scalar_spec(0.8, 120);
        let f = ImpulseResponse::scalar(&[1.0, 0.5, 0.25]).unwrap();
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        for w in [0, 1, 3, 7] {
            let report = BoundReport::new(&spec, &f, &noise, w);
            let vt = report.v * spec.horizon() as f64;
            assert_relative_eq!(vt, report.v1 + report.v2, max_relative = 1e-9);
        }
    }

    #[test]
    fn optimal_window_iid_is_maximal() {
        let spec = scalar_spec(1.0, 50);
        let f = ImpulseResponse::iid(1);
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        assert_eq!(optimal_window(&spec, &f, &noise, 49), 49);
        assert_eq!(optimal_window(&spec, &f, &noise, 0), 0);
    }

    #[test]
    fn optimal_window_persistent_is_small_and_stable() {
        let f = ImpulseResponse::scalar(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        let spec100 = scalar_spec(0.5, 100);
        let spec200 = scalar_spec(0.5, 200);
        let w100 = optimal_window(&spec100, &f, &noise, 99);
        let w200 = optimal_window(&spec200, &f, &noise, 199);
        assert_eq!(w100, w200);
        assert!(w100 < 10);
    }

    #[test]
    fn a_matrix_w0_is_identity() {
        let f = ImpulseResponse::iid(1);
        let a = build_a(&f, 0, 5).unwrap();
        assert!((a - DMatrix::<f64>::identity(5, 5)).abs().max() < 1e-12);
    }

    #[test]
    fn a_matrix_block_structure() {
        // T=4, w=1, k=1: Ω₁ tiles {1,2},{3,4}; each block is the
        // lower-triangular Toeplitz [[1,0],[f(1),1]].
        let f = ImpulseResponse::scalar(&[1.0, 0.5]).unwrap();
        let a1 = build_a_k(&f, 1, 4, 1).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.5, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.5, 1.0,
            ],
        );
        assert!((a1 - expect).abs().max() < 1e-12);
        // k=0 tiles {1},{2,3},{4}: no coupling into t=1 or out of t=3.
        let a0 = build_a_k(&f, 1, 4, 0).unwrap();
        let expect0 = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.5, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        assert!((a0 - expect0).abs().max() < 1e-12);
    }

    #[test]
    fn g2_matches_quadratic_form() {
        let f = ImpulseResponse::scalar(&[1.0, 0.5]).unwrap();
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        let horizon = 6;
        let spec = scalar_spec(0.6, horizon);
        let w = 1;
        let y_hat: Vec<_> = (0..horizon)
            .map(|t| DVector::from_element(1, (t as f64).cos()))
            .collect();
        for seed in 0..5u64 {
            let r = realize(&f, &noise, y_hat.clone(), seed).unwrap();
            let afhc = run_afhc(w, &r, &spec, &f).unwrap();
            let (opt, _) = run_opt_with(&r, &spec, &RunOptions::default()).unwrap();
            let (g1, g2) = decompose_g1_g2(&afhc, &opt, &r, &f, &spec).unwrap();
            assert!(g1 >= 0.0 && g2 >= 0.0);
            let a = build_a(&f, w, horizon).unwrap();
            let e = DVector::from_fn(horizon, |i, _| r.innovations[i][0]);
            let quad = 0.5 * (&a * &e).norm_squared();
            assert_relative_eq!(g2, quad, max_relative = 1e-10);
            // Per-realization suboptimality bound.
            let cd = afhc.afhc.cost.total() - opt.cost.total();
            assert!(cd <= g1 + g2 + 1e-6);
        }
    }

    #[test]
    fn zero_noise_kills_g2() {
        let f = ImpulseResponse::iid(1);
        let horizon = 8;
        let spec = scalar_spec(0.5, horizon);
        let y_hat: Vec<_> = (0..horizon)
            .map(|t| DVector::from_element(1, (t % 3) as f64))
            .collect();
        let zeros = vec![DVector::zeros(1); horizon];
        let r = Realization::from_innovations(&f, y_hat, zeros, 0, 1.0).unwrap();
        let afhc = run_afhc(2, &r, &spec, &f).unwrap();
        let (opt, _) = run_opt_with(&r, &spec, &RunOptions::default()).unwrap();
        let (g1, g2) = decompose_g1_g2(&afhc, &opt, &r, &f, &spec).unwrap();
        assert_eq!(g2, 0.0);
        let cd = afhc.afhc.cost.total() - opt.cost.total();
        assert!(cd <= g1 + 1e-6);
    }

    #[test]
    fn spectral_examples() {
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        let iid = ImpulseResponse::iid(1);
        let a = build_a(&iid, 0, 6).unwrap();
        let (lam, bound) = spectral_bound_check(&a, &iid, &noise, 0).unwrap();
        assert_relative_eq!(lam, 1.0, epsilon = 1e-9);
        assert_relative_eq!(bound, 1.0);

        let f = ImpulseResponse::scalar(&[1.0, 1.0]).unwrap();
        let a = build_a(&f, 1, 12).unwrap();
        let (lam, bound) = spectral_bound_check(&a, &f, &noise, 1).unwrap();
        assert_relative_eq!(bound, 3.0);
        assert!(lam <= bound + 1e-9);
    }

    #[test]
    fn spectral_bound_holds_across_configs() {
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        for taps in [vec![1.0], vec![1.0, 0.5, 0.25], vec![1.0, 1.0, 1.0]] {
            let f = ImpulseResponse::scalar(&taps).unwrap();
            for horizon in [12, 30] {
                for w in [0usize, 1, 3] {
                    let a = build_a(&f, w, horizon).unwrap();
                    let (lam, bound) = spectral_bound_check(&a, &f, &noise, w).unwrap();
                    assert!(
                        lam <= bound + 1e-9,
                        "taps {taps:?} T={horizon} w={w}: {lam} > {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn tail_bounds_limits() {
        let spec = scalar_spec(1.0, 120);
        let f = ImpulseResponse::iid(1);
        let noise = NoiseSpec::uniform_scalar(1.0).unwrap();
        let report = BoundReport::new(&spec, &f, &noise, 3);
        let (big_u, simple_big) = conc_tail_bound(&report, 1e9).unwrap();
        assert!(big_u < 1e-30);
        assert!(simple_big < 1e-30);
        let (at_zero, simple_zero) = conc_tail_bound(&report, 0.0).unwrap();
        assert_relative_eq!(at_zero, 2.0);
        assert_relative_eq!(simple_zero, 2.0);
        // Each two-term denominator is dominated by a + b·u on a grid.
        let (a, b) = (report.bern_a.unwrap(), report.bern_b.unwrap());
        let eps = report.epsilon.unwrap();
        let s2 = report.sigma2.unwrap();
        let t = report.horizon as f64;
        let wp1 = report.w as f64 + 1.0;
        for i in 0..=50 {
            let u = i as f64 * 2.0;
            let d1 = 8.0 * eps * eps * (report.beta * report.beta * t / (wp1 * s2))
                * report.fw_norm
                * report.fw_norm;
            let d2 = 16.0 * eps * eps * report.lambda_bound.unwrap()
                * (2.0 * t * report.f_w / wp1 + u);
            assert!(d1 <= a + b * u + 1e-9);
            assert!(d2 <= a + b * u + 1e-9);
        }
    }

    #[test]
    fn g1_g2_tail_shapes() {
        // Sub-Gaussian: doubling u quadruples the exponent.
        let b1 = g1_tail_bound(100, 3, 1.0, 0.5, 1.0, 1.0, 2.0);
        let b2 = g1_tail_bound(100, 3, 1.0, 0.5, 1.0, 1.0, 4.0);
        assert_relative_eq!(b1.ln() * 4.0, b2.ln(), max_relative = 1e-9);
        // Bernstein: for large u the exponent approaches u/(8ε²λ) (the
        // linear regime); compare exponents to stay clear of underflow.
        let lambda = 2.0;
        let eps = 0.5;
        let huge = 1e9;
        let t = 100;
        let w = 3;
        let f_w = 4.0;
        let den = 8.0 * eps * eps * lambda * (t as f64 * f_w / (w as f64 + 1.0) + huge);
        let exponent = huge * huge / den;
        let asymptote = huge / (8.0 * eps * eps * lambda);
        assert!((exponent / asymptote - 1.0).abs() < 1e-3);
        // Concrete parameters evaluate to something positive and finite.
        let v = g1_tail_bound(120, 3, 1.0, 0.5, 1.0 / 12.0, 1.0 / 12.0, 5.0);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn sta_gap_bound_examples() {
        // Constant targets: variation term 0 ⇒ bound ≤ 0 ≤ actual gap.
        let spec = scalar_spec(0.5, 4);
        let constant = vec![DVector::from_element(1, 2.0); 4];
        assert!(sta_gap_lower_bound(&spec, &constant).unwrap() <= 0.0);

        // Alternating example: compare to the exact gap from solver runs.
        let y: Vec<_> = [1.0, 0.0, 1.0, 0.0]
            .iter()
            .map(|&v| DVector::from_element(1, v))
            .collect();
        let bound = sta_gap_lower_bound(&spec, &y).unwrap();
        let sta = crate::solver::static_optimum(&spec, &y).unwrap();
        let opt = crate::solver::solve_opt(&spec, &y, 1e-10, 50_000).unwrap();
        let gap = sta.cost - opt.objective;
        assert!(gap >= bound - 1e-9, "gap {gap} < bound {bound}");

        // β = 0 with invertible K: the bound matches the gap exactly.
        let spec0 = ProblemSpec::new(DMatrix::from_element(1, 1, 1.0), 0.0, 4).unwrap();
        let bound0 = sta_gap_lower_bound(&spec0, &y).unwrap();
        let sta0 = crate::solver::static_optimum(&spec0, &y).unwrap();
        let opt0 = crate::solver::solve_opt(&spec0, &y, 1e-10, 50_000).unwrap();
        assert_relative_eq!(sta0.cost - opt0.objective, bound0, epsilon = 1e-9);
    }

    #[test]
    fn sta_gap_bound_holds_on_random_instances() {
        let mut rng = CounterRng::for_label(3, 9);
        for trial in 0..25 {
            let horizon = 3 + trial % 4;
            let beta = [0.2, 0.6, 1.5][trial % 3];
            let spec = scalar_spec(beta, horizon);
            let y: Vec<_> = (0..horizon)
                .map(|_| DVector::from_element(1, 2.0 * rng.next_std_normal()))
                .collect();
            let bound = sta_gap_lower_bound(&spec, &y).unwrap();
            let sta = crate::solver::static_optimum(&spec, &y).unwrap();
            let opt = crate::solver::solve_opt(&spec, &y, 1e-10, 50_000).unwrap();
            assert!(sta.cost - opt.objective >= bound - 1e-7);
        }
    }

    #[test]
    fn regret_condition_large_vs_flat() {
        let spec = scalar_spec(0.5, 40);
        let f = ImpulseResponse::iid(1);
        let noise = NoiseSpec::gaussian_scalar(1.0).unwrap();
        // Large alternating predictions: variation grows like c²T.
        let c = 20.0;
        let loud: Vec<_> = (0..40)
            .map(|t| DVector::from_element(1, if t % 2 == 0 { c } else { -c }))
            .collect();
        let report =
            regret_condition_check(&spec, &f, &noise, &[loud], 3, 200, 11).unwrap();
        assert!(report.holds, "inf {} thr {}", report.infimum, report.threshold);
        assert!(report.alpha1_threshold < report.threshold);
        // Constant predictions with zero noise: variation 0, condition fails.
        let flat = vec![DVector::from_element(1, 3.0); 40];
        let zero = NoiseSpec::zero(1);
        let report = regret_condition_check(&spec, &f, &zero, &[flat], 3, 10, 11).unwrap();
        assert!(!report.holds);
        assert_eq!(report.infimum, 0.0);
    }

    #[test]
    fn bound_report_serializes_with_exact_field_names() {
        let spec = scalar_spec(1.0, 120);
        let f = ImpulseResponse::iid(1);
        let noise = NoiseSpec::uniform_scalar(1.0).unwrap();
        let report = BoundReport::new(&spec, &f, &noise, 3);
        let json = serde_json::to_value(&report).unwrap();
        let obj = json.as_object().unwrap();
        let want = [
            "w",
            "fw_norm",
            "F_w",
            "V",
            "B",
            "alpha1",
            "alpha2",
            "V1",
            "V2",
            "lambda_bound",
            "bern_a",
            "bern_b",
            "epsilon",
        ];
        assert_eq!(obj.len(), want.len());
        for key in want {
            assert!(obj.contains_key(key), "missing {key}");
        }
    }
}
