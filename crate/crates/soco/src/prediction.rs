//! Colored-noise prediction-error model.
//!
//! Targets follow `y_t = ŷ_t + Σ_{s=1}^t f(t−s) e(s)` where the innovations
//! `e(s)` are i.i.d. with mean zero and covariance `R_e`, and the impulse
//! response satisfies `f(0) = I`, `f(t) = 0` for `t < 0` and `t > L`. The
//! prediction of `y_t` made at time `τ` is
//! `y_{t|τ} = ŷ_t + Σ_{s=1}^τ f(t−s) e(s)`, equivalently
//! `y_t − Σ_{s=τ+1}^t f(t−s) e(s)`; both routes are exposed and must agree.
//!
//! Two scalars summarize how prediction errors correlate: the aggregate
//! (w+1)-step error variance `‖f_w‖² = tr(R_e Σ_{s=0}^w f(s)ᵀ f(s))` and the
//! projected cumulative variance
//! `F(w) = tr(R_e Σ_{s=0}^w (w−s+1) f(s)ᵀ KK† f(s))`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::problem::{DerivedOperators, KahanSum};
use crate::rng::{mix_seed, CounterRng};
use crate::{Error, Result};

/// Tolerance for `f(0) = I` checks on externally supplied taps.
const F0_IDENTITY_TOL: f64 = 1e-8;
/// Default cap for the Riccati fixed-point iteration.
pub const RICCATI_MAX_ITERS: usize = 100_000;
/// Riccati residual target.
const RICCATI_TOL: f64 = 1e-10;

/// Deterministic impulse response `f(0), …, f(L)` with `f(0) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    taps: Vec<DMatrix<f64>>,
}

impl ImpulseResponse {
    /// Builds from explicit taps; `taps[0]` must be the identity (it is
    /// snapped to the exact identity after an `1e-8` consistency check).
    pub fn new(mut taps: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::InvalidArgument("impulse response needs f(0)".into()))?;
        let m = first.nrows();
        if first.ncols() != m {
            return Err(Error::Dimension("impulse taps must be square".into()));
        }
        let dev = (first - DMatrix::<f64>::identity(m, m)).abs().max();
        if dev > F0_IDENTITY_TOL {
            return Err(Error::ImpulseNotNormalized(format!(
                "f(0) deviates from I by {dev:.3e}"
            )));
        }
        for (s, tap) in taps.iter().enumerate() {
            if tap.nrows() != m || tap.ncols() != m {
                return Err(Error::Dimension(format!(
                    "impulse tap f({s}) has shape {}x{}, expected {m}x{m}",
                    tap.nrows(),
                    tap.ncols()
                )));
            }
        }
        taps[0] = DMatrix::identity(m, m);
        Ok(ImpulseResponse { taps })
    }

    /// White noise: `f = [I]`.
    pub fn iid(m: usize) -> Self {
        ImpulseResponse {
            taps: vec![DMatrix::identity(m, m)],
        }
    }

    /// Scalar taps, `taps[0]` must be 1.
    pub fn scalar(taps: &[f64]) -> Result<Self> {
        Self::new(
            taps.iter()
                .map(|&v| DMatrix::from_element(1, 1, v))
                .collect(),
        )
    }

    /// Drops trailing taps with Frobenius norm below `tol`.
    pub fn truncate_decayed(mut self, tol: f64) -> Self {
        while self.taps.len() > 1 {
            if self.taps.last().unwrap().norm() < tol {
                self.taps.pop();
            } else {
                break;
            }
        }
        self
    }

    /// Largest index with an explicit tap (taps beyond are zero).
    pub fn len_l(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.taps[0].nrows()
    }

    /// `f(s)` with the implicit zero convention outside `[0, L]`.
    pub fn tap(&self, s: i64) -> Option<&DMatrix<f64>> {
        if s < 0 || s as usize >= self.taps.len() {
            None
        } else {
            Some(&self.taps[s as usize])
        }
    }

    pub fn taps(&self) -> &[DMatrix<f64>] {
        &self.taps
    }
}

/// Innovation distribution families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Gaussian,
    /// Per-coordinate uniform on (−ε, ε); requires a diagonal `R_e` with
    /// every diagonal entry equal to ε²/3.
    UniformBounded,
    /// Gaussian rejected until every coordinate satisfies |e_i| < ε.
    TruncatedGaussian,
    /// Degenerate all-zero innovations (test hook for noiseless worlds).
    Zero,
}

/// Innovation specification: family plus covariance `R_e` (and the support
/// half-width ε for the bounded families).
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub r_e: DMatrix<f64>,
    pub epsilon: Option<f64>,
    chol: Option<DMatrix<f64>>,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, r_e: DMatrix<f64>, epsilon: Option<f64>) -> Result<Self> {
        let m = r_e.nrows();
        if r_e.ncols() != m || m == 0 {
            return Err(Error::Dimension("R_e must be square and nonempty".into()));
        }
        if family == NoiseFamily::Zero {
            if r_e.abs().max() > 0.0 {
                return Err(Error::NoiseSpec(
                    "zero family requires an all-zero covariance".into(),
                ));
            }
            return Ok(NoiseSpec {
                family,
                r_e,
                epsilon: None,
                chol: None,
            });
        }
        let sym_dev = (&r_e - r_e.transpose()).abs().max();
        if sym_dev > 1e-12 * (1.0 + r_e.abs().max()) {
            return Err(Error::CovarianceNotPd);
        }
        let chol = Cholesky::new(r_e.clone()).ok_or(Error::CovarianceNotPd)?;
        match family {
            NoiseFamily::Gaussian => Ok(NoiseSpec {
                family,
                r_e,
                epsilon: None,
                chol: Some(chol.unpack()),
            }),
            NoiseFamily::UniformBounded => {
                let eps = epsilon.filter(|&e| e > 0.0).ok_or_else(|| {
                    Error::NoiseSpec("uniform-bounded family requires epsilon > 0".into())
                })?;
                for i in 0..m {
                    for j in 0..m {
                        if i != j && r_e[(i, j)].abs() > 1e-12 {
                            return Err(Error::NoiseSpec(
                                "uniform-bounded family requires a diagonal R_e".into(),
                            ));
                        }
                    }
                    let want = eps * eps / 3.0;
                    if (r_e[(i, i)] - want).abs() > 1e-9 * want.max(1.0) {
                        return Err(Error::NoiseSpec(format!(
                            "uniform-bounded variance must be eps^2/3 = {want}, got {}",
                            r_e[(i, i)]
                        )));
                    }
                }
                Ok(NoiseSpec {
                    family,
                    r_e,
                    epsilon: Some(eps),
                    chol: None,
                })
            }
            NoiseFamily::TruncatedGaussian => {
                let eps = epsilon.filter(|&e| e > 0.0).ok_or_else(|| {
                    Error::NoiseSpec("truncated-gaussian family requires epsilon > 0".into())
                })?;
                Ok(NoiseSpec {
                    family,
                    r_e,
                    epsilon: Some(eps),
                    chol: Some(chol.unpack()),
                })
            }
            NoiseFamily::Zero => unreachable!(),
        }
    }

    pub fn gaussian(r_e: DMatrix<f64>) -> Result<Self> {
        Self::new(NoiseFamily::Gaussian, r_e, None)
    }

    /// Scalar Gaussian with variance `sigma2`.
    pub fn gaussian_scalar(sigma2: f64) -> Result<Self> {
        Self::gaussian(DMatrix::from_element(1, 1, sigma2))
    }

    /// Scalar uniform on (−ε, ε); variance is ε²/3 by construction.
    pub fn uniform_scalar(epsilon: f64) -> Result<Self> {
        Self::new(
            NoiseFamily::UniformBounded,
            DMatrix::from_element(1, 1, epsilon * epsilon / 3.0),
            Some(epsilon),
        )
    }

    /// Degenerate zero-noise hook.
    pub fn zero(m: usize) -> Self {
        NoiseSpec {
            family: NoiseFamily::Zero,
            r_e: DMatrix::zeros(m, m),
            epsilon: None,
            chol: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.r_e.nrows()
    }

    /// Scalar variance σ² (only meaningful for m = 1).
    pub fn sigma2(&self) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::NotScalar);
        }
        Ok(self.r_e[(0, 0)])
    }

    /// Draws `e(t)` from the stream keyed by `(seed, t)`.
    ///
    /// Returns the innovation and the number of proposals consumed (always 1
    /// except for the truncated family).
    pub fn sample_innovation(&self, seed: u64, t: u64) -> (DVector<f64>, u64) {
        let m = self.dim();
        let mut rng = CounterRng::for_timestep(seed, t);
        match self.family {
            NoiseFamily::Zero => (DVector::zeros(m), 1),
            NoiseFamily::Gaussian => {
                let z = DVector::from_fn(m, |_, _| rng.next_std_normal());
                (self.chol.as_ref().unwrap() * z, 1)
            }
            NoiseFamily::UniformBounded => {
                let eps = self.epsilon.unwrap();
                (DVector::from_fn(m, |_, _| rng.next_symmetric(eps)), 1)
            }
            NoiseFamily::TruncatedGaussian => {
                let eps = self.epsilon.unwrap();
                let chol = self.chol.as_ref().unwrap();
                let mut trials = 0;
                loop {
                    trials += 1;
                    let z = DVector::from_fn(m, |_, _| rng.next_std_normal());
                    let e = chol * z;
                    if e.iter().all(|v| v.abs() < eps) {
                        return (e, trials);
                    }
                }
            }
        }
    }
}

/// One sampled world: initial predictions, innovations, realized targets.
#[derive(Debug, Clone)]
pub struct Realization {
    pub y_hat: Vec<DVector<f64>>,
    /// `innovations[t-1]` is `e(t)` for `t = 1..=T`.
    pub innovations: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub seed: u64,
    /// Fraction of accepted proposals (1.0 except for truncated sampling).
    pub acceptance_rate: f64,
}

impl Realization {
    pub fn horizon(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.y_hat.first().map_or(0, |v| v.len())
    }

    /// Builds a realization from externally supplied innovations.
    ///
    /// `realize` delegates here after sampling; tests use it to inject
    /// degenerate noise.
    pub fn from_innovations(
        f: &ImpulseResponse,
        y_hat: Vec<DVector<f64>>,
        innovations: Vec<DVector<f64>>,
        seed: u64,
        acceptance_rate: f64,
    ) -> Result<Self> {
        let horizon = y_hat.len();
        if horizon == 0 {
            return Err(Error::Dimension("y_hat must be nonempty".into()));
        }
        if innovations.len() != horizon {
            return Err(Error::Dimension(format!(
                "got {} innovations for horizon {horizon}",
                innovations.len()
            )));
        }
        let m = f.dim();
        for v in y_hat.iter().chain(innovations.iter()) {
            if v.len() != m {
                return Err(Error::Dimension(
                    "prediction/innovation dimension mismatch".into(),
                ));
            }
        }
        let mut r = Realization {
            y_hat,
            innovations,
            y: Vec::with_capacity(horizon),
            seed,
            acceptance_rate,
        };
        for t in 1..=horizon {
            // y_t is defined as the one-step prediction plus e(t); the prefix
            // sum is shared bitwise with predict_at via `predicted_value`.
            let mut y_t = r.predicted_value(f, t, t - 1);
            y_t += &r.innovations[t - 1];
            r.y.push(y_t);
        }
        Ok(r)
    }

    /// `y_{t|tau}` via the forward route `ŷ_t + Σ_{s≤tau} f(t−s)e(s)`.
    ///
    /// `t` is 1-based; requires `0 ≤ tau < t`.
    fn predicted_value(&self, f: &ImpulseResponse, t: usize, tau: usize) -> DVector<f64> {
        let mut acc = self.y_hat[t - 1].clone();
        let l = f.len_l();
        let lo = 1.max(t.saturating_sub(l));
        let hi = tau.min(t);
        for s in lo..=hi {
            if let Some(tap) = f.tap((t - s) as i64) {
                acc.gemv(1.0, tap, &self.innovations[s - 1], 1.0);
            }
        }
        acc
    }
}

/// Samples a realization: i.i.d. innovations with covariance `R_e` drawn
/// from counter-based streams keyed by `(seed, t)`, then the convolution
/// `y_t = ŷ_t + Σ_{s=1}^t f(t−s) e(s)`.
pub fn realize(
    f: &ImpulseResponse,
    noise: &NoiseSpec,
    y_hat: Vec<DVector<f64>>,
    seed: u64,
) -> Result<Realization> {
    if noise.dim() != f.dim() {
        return Err(Error::Dimension(
            "noise and impulse response dimension mismatch".into(),
        ));
    }
    let horizon = y_hat.len();
    let mut innovations = Vec::with_capacity(horizon);
    let mut trials_total = 0u64;
    for t in 1..=horizon as u64 {
        let (e, trials) = noise.sample_innovation(seed, t);
        innovations.push(e);
        trials_total += trials;
    }
    let acceptance_rate = if horizon == 0 {
        1.0
    } else {
        horizon as f64 / trials_total as f64
    };
    Realization::from_innovations(f, y_hat, innovations, seed, acceptance_rate)
}

/// Predictions `{y_{t|tau} : t = tau+1..T}` via the forward route.
pub fn predict_at(r: &Realization, f: &ImpulseResponse, tau: usize) -> Result<Vec<DVector<f64>>> {
    if tau >= r.horizon() {
        return Err(Error::InvalidArgument(format!(
            "tau = {tau} out of range for horizon {}",
            r.horizon()
        )));
    }
    Ok(((tau + 1)..=r.horizon())
        .map(|t| r.predicted_value(f, t, tau))
        .collect())
}

/// Same predictions computed backward from the realized targets,
/// `y_{t|tau} = y_t − Σ_{s=tau+1}^t f(t−s) e(s)`. Cross-check route.
pub fn predict_at_from_realized(
    r: &Realization,
    f: &ImpulseResponse,
    tau: usize,
) -> Result<Vec<DVector<f64>>> {
    if tau >= r.horizon() {
        return Err(Error::InvalidArgument(format!(
            "tau = {tau} out of range for horizon {}",
            r.horizon()
        )));
    }
    let l = f.len_l();
    Ok(((tau + 1)..=r.horizon())
        .map(|t| {
            let mut acc = r.y[t - 1].clone();
            let lo = (tau + 1).max(t.saturating_sub(l)).max(1);
            for s in lo..=t {
                if let Some(tap) = f.tap((t - s) as i64) {
                    acc.gemv(-1.0, tap, &r.innovations[s - 1], 1.0);
                }
            }
            acc
        })
        .collect())
}

/// Predictions for the clipped window `t = lo..=hi` as seen from `tau`
/// (forward route). Used by the window-based policies.
pub(crate) fn predict_range(
    r: &Realization,
    f: &ImpulseResponse,
    tau: usize,
    lo: usize,
    hi: usize,
) -> Vec<DVector<f64>> {
    debug_assert!(lo > tau && hi <= r.horizon());
    (lo..=hi).map(|t| r.predicted_value(f, t, tau)).collect()
}

#[inline]
fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(A B) without forming the product.
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `‖f_w‖² = tr(R_e Σ_{s=0}^w f(s)ᵀ f(s))`, the aggregate (w+1)-step
/// prediction error variance.
pub fn fw_norm_sq(f: &ImpulseResponse, noise: &NoiseSpec, w: usize) -> f64 {
    let m = f.dim();
    let mut acc = DMatrix::<f64>::zeros(m, m);
    for s in 0..=w.min(f.len_l()) {
        let tap = &f.taps()[s];
        acc += tap.transpose() * tap;
    }
    trace_product(&noise.r_e, &acc)
}

/// σ²-free tap energy `Σ_{s=0}^w ‖f(s)‖²_F` (the concentration section's
/// unweighted `Σ|f(t)|²` in the scalar case).
pub fn fw_unweighted_sq(f: &ImpulseResponse, w: usize) -> f64 {
    (0..=w.min(f.len_l()))
        .map(|s| f.taps()[s].norm_squared())
        .sum()
}

/// `F(w) = tr(R_e Σ_{s=0}^w (w−s+1) f(s)ᵀ KK† f(s))`, the projected
/// cumulative prediction error variance over a window.
pub fn big_f(f: &ImpulseResponse, noise: &NoiseSpec, ops: &DerivedOperators, w: usize) -> f64 {
    let m = f.dim();
    let mut acc = DMatrix::<f64>::zeros(m, m);
    for s in 0..=w.min(f.len_l()) {
        let tap = &f.taps()[s];
        let weight = (w - s + 1) as f64;
        acc += (tap.transpose() * &ops.proj_range * tap) * weight;
    }
    trace_product(&noise.r_e, &acc)
}

/// Wiener-filter impulse response: `f(s) = R_y(s) R_e⁻¹`.
///
/// Requires `R_y(0) R_e⁻¹ = I` within 1e-8, i.e. the supplied autocovariance
/// and innovation covariance must be consistent with `f(0) = I`.
pub fn wiener_impulse(
    r_y: &[DMatrix<f64>],
    r_e: &DMatrix<f64>,
    l: usize,
) -> Result<ImpulseResponse> {
    let first = r_y
        .first()
        .ok_or_else(|| Error::InvalidArgument("autocovariance sequence is empty".into()))?;
    let m = first.nrows();
    let re_inv = Cholesky::new(r_e.clone())
        .ok_or(Error::CovarianceNotPd)?
        .inverse();
    let f0 = first * &re_inv;
    let dev = (&f0 - DMatrix::<f64>::identity(m, m)).abs().max();
    if dev > F0_IDENTITY_TOL {
        return Err(Error::ImpulseNotNormalized(format!(
            "R_y(0) R_e^-1 deviates from I by {dev:.3e}"
        )));
    }
    let mut taps = Vec::with_capacity(l + 1);
    taps.push(DMatrix::identity(m, m));
    for s in 1..=l {
        let tap = match r_y.get(s) {
            Some(ry) => ry * &re_inv,
            None => DMatrix::zeros(m, m),
        };
        taps.push(tap);
    }
    ImpulseResponse::new(taps)
}

/// Spectral radius via dense eigenvalues (systems here are small).
fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Steady-state Kalman-filter impulse response.
///
/// Solves `P = A P Aᵀ + B Q Bᵀ − K_p R_e K_pᵀ` with
/// `K_p = (A P Cᵀ + B S) R_e⁻¹` and `R_e = R + C P Cᵀ` by fixed-point
/// iteration, then returns taps `f(0) = I`, `f(s) = C A^{s−1} K_p` for
/// `s ≥ 1`, together with `R_e`.
#[allow(clippy::too_many_arguments)]
pub fn kalman_impulse(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
    l: usize,
) -> Result<(ImpulseResponse, DMatrix<f64>)> {
    let n = a.nrows();
    let p_dim = c.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension("inconsistent state-space shapes".into()));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::UnstableSystem { rho });
    }
    let bqb = b * q * b.transpose();
    let mut p = bqb.clone();
    let mut k_gain = DMatrix::zeros(n, p_dim);
    let mut r_e = DMatrix::zeros(p_dim, p_dim);
    let mut residual = f64::INFINITY;
    for iter in 0..RICCATI_MAX_ITERS {
        r_e = r + c * &p * c.transpose();
        let re_inv = Cholesky::new(r_e.clone())
            .ok_or(Error::CovarianceNotPd)?
            .inverse();
        k_gain = (a * &p * c.transpose() + b * s) * re_inv;
        let p_next = a * &p * a.transpose() + &bqb - &k_gain * &r_e * k_gain.transpose();
        // Symmetrize to keep roundoff from drifting the iterate.
        let p_next = (&p_next + p_next.transpose()) * 0.5;
        residual = (&p_next - &p).abs().max();
        p = p_next;
        if residual < RICCATI_TOL {
            break;
        }
        if !residual.is_finite() || p.abs().max() > 1e12 {
            return Err(Error::RiccatiNotConverged {
                iters: iter + 1,
                residual,
            });
        }
    }
    if residual >= RICCATI_TOL {
        return Err(Error::RiccatiNotConverged {
            iters: RICCATI_MAX_ITERS,
            residual,
        });
    }
    let mut taps = Vec::with_capacity(l + 1);
    taps.push(DMatrix::identity(p_dim, p_dim));
    if l >= 1 {
        let mut a_pow = DMatrix::<f64>::identity(n, n);
        for _ in 1..=l {
            taps.push(c * &a_pow * &k_gain);
            a_pow = a * a_pow;
        }
    }
    Ok((ImpulseResponse::new(taps)?, r_e))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn mc_cov_impl(
    f: &ImpulseResponse,
    noise: &NoiseSpec,
    projector: Option<&DMatrix<f64>>,
    w: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let mut sum = KahanSum::new();
    let mut sum_sq = KahanSum::new();
    for i in 0..samples {
        let sample_seed = mix_seed(seed, i as u64);
        // δy_w = Σ_{s=0}^w f(w−s) e(s); the w+1 innovations live at
        // stream keys 1..=w+1 of this sample's seed.
        let mut delta = DVector::<f64>::zeros(f.dim());
        for s in 0..=w {
            if let Some(tap) = f.tap((w - s) as i64) {
                let (e, _) = noise.sample_innovation(sample_seed, s as u64 + 1);
                delta.gemv(1.0, tap, &e, 1.0);
            }
        }
        let v = match projector {
            Some(p) => (p * &delta).norm_squared(),
            None => delta.norm_squared(),
        };
        sum.add(v);
        sum_sq.add(v * v);
    }
    let n = samples as f64;
    let mean = sum.value() / n;
    let var = (sum_sq.value() / n - mean * mean).max(0.0);
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples,
    })
}

/// Monte Carlo oracle for `‖f_w‖²`: empirical mean of `‖δy_w‖²` with
/// `δy_w = Σ_{s=0}^w f(w−s) e(s)`.
pub fn mc_error_covariance(
    f: &ImpulseResponse,
    noise: &NoiseSpec,
    w: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_cov_impl(f, noise, None, w, samples, seed)
}

/// Projected variant: empirical mean of `‖KK† δy_w‖²`, the per-step
/// increment `F(w) − F(w−1)`.
pub fn mc_projected_error_covariance(
    f: &ImpulseResponse,
    noise: &NoiseSpec,
    ops: &DerivedOperators,
    w: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_cov_impl(f, noise, Some(&ops.proj_range), w, samples, seed)
}
