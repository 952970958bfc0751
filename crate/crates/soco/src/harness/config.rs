//! JSON experiment configuration and its resolution into model objects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::prediction::{
    kalman_impulse, wiener_impulse, ImpulseResponse, NoiseFamily, NoiseSpec,
};
use crate::problem::ProblemSpec;
use crate::{Error, Result};

/// Tap decay threshold used when an impulse length is not given.
const TAP_DECAY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: SpecConfig,
    pub impulse: ImpulseConfig,
    pub noise: NoiseConfig,
    pub y_hat: YHatConfig,
    pub algorithms: Vec<AlgorithmConfig>,
    pub samples: usize,
    pub seed: u64,
    /// Output path prefix for `.samples.csv` / `.summary.json` /
    /// `.config.json` (and `.tail.csv` / `.sweep.csv` where applicable).
    pub output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    /// Tracking map as nested row arrays (scalar instances use `[[k]]`).
    pub k: Vec<Vec<f64>>,
    pub beta: f64,
    pub horizon: usize,
}

/// Explicit taps: a plain list for scalar models, nested matrices otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TapsConfig {
    Scalar(Vec<f64>),
    Matrix(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImpulseConfig {
    /// White prediction error: `f = [I]`.
    Iid,
    Explicit {
        taps: TapsConfig,
    },
    Wiener {
        /// Autocovariance sequence `R_y(0), R_y(1), …`.
        r_y: Vec<Vec<Vec<f64>>>,
        r_e: Vec<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        len: Option<usize>,
    },
    Kalman {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        s: Vec<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        len: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub enum NoiseFamilyConfig {
    #[serde(rename = "gaussian")]
    Gaussian,
    #[serde(rename = "uniform-bounded")]
    UniformBounded,
    #[serde(rename = "truncated-gaussian")]
    TruncatedGaussian,
    /// Degenerate noiseless hook.
    #[serde(rename = "zero")]
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub family: NoiseFamilyConfig,
    /// Innovation covariance; may be omitted for `kalman`/`wiener` impulses
    /// (the model's innovation covariance is used) and for the `zero`
    /// family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_e: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YHatConfig {
    Constant {
        value: Vec<f64>,
    },
    /// `ŷ_t = amplitude · sin(2π(t + phase)/period)`.
    Sinusoid {
        amplitude: Vec<f64>,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `ŷ_t = ±value`, positive at t = 1.
    Alternating {
        value: Vec<f64>,
    },
    Explicit {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    Fhc,
    Afhc,
    Open,
    Opt,
    Sta,
    Rhc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    /// FHC offset (defaults to 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// A configured policy with its resolved parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfiguredPolicy {
    Fhc { k: usize, w: usize },
    Afhc { w: usize },
    Open,
    Opt,
    Sta,
    Rhc { w: usize },
}

impl ConfiguredPolicy {
    pub fn w(&self) -> Option<usize> {
        match self {
            ConfiguredPolicy::Fhc { w, .. }
            | ConfiguredPolicy::Afhc { w }
            | ConfiguredPolicy::Rhc { w } => Some(*w),
            _ => None,
        }
    }
}

/// Fully validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub spec: ProblemSpec,
    pub impulse: ImpulseResponse,
    pub noise: NoiseSpec,
    pub y_hat: Vec<DVector<f64>>,
    pub policies: Vec<ConfiguredPolicy>,
    pub samples: usize,
    pub seed: u64,
    pub output: String,
    /// The parsed config, echoed verbatim to `<prefix>.config.json`.
    pub config: ExperimentConfig,
}

fn to_matrix(path: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::config(path, "matrix must be nonempty"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::config(path, "ragged matrix rows"));
    }
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::config(path, "matrix entries must be finite"));
            }
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn matrix_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && (a - b).abs().max() <= tol
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from)
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let k = to_matrix("spec.k", &self.spec.k)?;
        let spec = ProblemSpec::new(k, self.spec.beta, self.spec.horizon)
            .map_err(|e| Error::config("spec", e.to_string()))?;
        let m = spec.m();
        let horizon = spec.horizon();

        // Impulse response; Kalman/Wiener also pin the innovation covariance.
        let (impulse, derived_r_e) = self.resolve_impulse(m, horizon)?;

        let noise = self.resolve_noise(m, derived_r_e)?;
        if noise.dim() != m {
            return Err(Error::config("noise.r_e", "dimension must match K rows"));
        }
        if impulse.dim() != m {
            return Err(Error::config("impulse", "tap dimension must match K rows"));
        }

        let y_hat = self.resolve_y_hat(m, horizon)?;

        if self.samples == 0 {
            return Err(Error::config("samples", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "need at least one algorithm"));
        }
        let mut policies = Vec::with_capacity(self.algorithms.len());
        for (i, alg) in self.algorithms.iter().enumerate() {
            let path = format!("algorithms[{i}]");
            let need_w = |w: Option<usize>| -> Result<usize> {
                let w =
                    w.ok_or_else(|| Error::config(&path, "this algorithm requires `w`"))?;
                if w + 1 > horizon {
                    return Err(Error::config(&path, format!("w = {w} must be <= T-1")));
                }
                Ok(w)
            };
            let policy = match alg.name {
                AlgorithmName::Fhc => {
                    let w = need_w(alg.w)?;
                    let k = alg.k.unwrap_or(0);
                    if k > w {
                        return Err(Error::config(&path, "need k <= w"));
                    }
                    ConfiguredPolicy::Fhc { k, w }
                }
                AlgorithmName::Afhc => ConfiguredPolicy::Afhc { w: need_w(alg.w)? },
                AlgorithmName::Rhc => ConfiguredPolicy::Rhc { w: need_w(alg.w)? },
                AlgorithmName::Open => ConfiguredPolicy::Open,
                AlgorithmName::Opt => ConfiguredPolicy::Opt,
                AlgorithmName::Sta => ConfiguredPolicy::Sta,
            };
            policies.push(policy);
        }

        Ok(ResolvedExperiment {
            spec,
            impulse,
            noise,
            y_hat,
            policies,
            samples: self.samples,
            seed: self.seed,
            output: self.output.clone(),
            config: self.clone(),
        })
    }

    fn resolve_impulse(
        &self,
        m: usize,
        horizon: usize,
    ) -> Result<(ImpulseResponse, Option<DMatrix<f64>>)> {
        match &self.impulse {
            ImpulseConfig::Iid => Ok((ImpulseResponse::iid(m), None)),
            ImpulseConfig::Explicit { taps } => {
                let taps = match taps {
                    TapsConfig::Scalar(vals) => {
                        if m != 1 {
                            return Err(Error::config(
                                "impulse.taps",
                                "scalar tap list requires a 1-dimensional target",
                            ));
                        }
                        vals.iter()
                            .map(|&v| DMatrix::from_element(1, 1, v))
                            .collect()
                    }
                    TapsConfig::Matrix(mats) => mats
                        .iter()
                        .enumerate()
                        .map(|(s, rows)| to_matrix(&format!("impulse.taps[{s}]"), rows))
                        .collect::<Result<Vec<_>>>()?,
                };
                let f = ImpulseResponse::new(taps)
                    .map_err(|e| Error::config("impulse.taps", e.to_string()))?;
                Ok((f, None))
            }
            ImpulseConfig::Wiener { r_y, r_e, len } => {
                let r_y: Vec<DMatrix<f64>> = r_y
                    .iter()
                    .enumerate()
                    .map(|(s, rows)| to_matrix(&format!("impulse.r_y[{s}]"), rows))
                    .collect::<Result<_>>()?;
                let r_e_mat = to_matrix("impulse.r_e", r_e)?;
                let l = len.unwrap_or_else(|| horizon.min(r_y.len().saturating_sub(1)));
                let f = wiener_impulse(&r_y, &r_e_mat, l)
                    .map_err(|e| Error::config("impulse", e.to_string()))?;
                let f = if len.is_none() {
                    f.truncate_decayed(TAP_DECAY_TOL)
                } else {
                    f
                };
                Ok((f, Some(r_e_mat)))
            }
            ImpulseConfig::Kalman {
                a,
                b,
                c,
                q,
                r,
                s,
                len,
            } => {
                let a = to_matrix("impulse.a", a)?;
                let b = to_matrix("impulse.b", b)?;
                let c = to_matrix("impulse.c", c)?;
                let q = to_matrix("impulse.q", q)?;
                let r = to_matrix("impulse.r", r)?;
                let s = to_matrix("impulse.s", s)?;
                let l = len.unwrap_or(horizon);
                let (f, r_e) = kalman_impulse(&a, &b, &c, &q, &r, &s, l)
                    .map_err(|e| Error::config("impulse", e.to_string()))?;
                let f = if len.is_none() {
                    f.truncate_decayed(TAP_DECAY_TOL)
                } else {
                    f
                };
                Ok((f, Some(r_e)))
            }
        }
    }

    fn resolve_noise(&self, m: usize, derived_r_e: Option<DMatrix<f64>>) -> Result<NoiseSpec> {
        let family = match self.noise.family {
            NoiseFamilyConfig::Gaussian => NoiseFamily::Gaussian,
            NoiseFamilyConfig::UniformBounded => NoiseFamily::UniformBounded,
            NoiseFamilyConfig::TruncatedGaussian => NoiseFamily::TruncatedGaussian,
            NoiseFamilyConfig::Zero => {
                return Ok(NoiseSpec::zero(m));
            }
        };
        let r_e = match (&self.noise.r_e, derived_r_e) {
            (Some(rows), derived) => {
                let given = to_matrix("noise.r_e", rows)?;
                if let Some(derived) = derived {
                    if !matrix_close(&given, &derived, 1e-6 * (1.0 + derived.abs().max())) {
                        return Err(Error::config(
                            "noise.r_e",
                            "covariance conflicts with the impulse model's innovation covariance",
                        ));
                    }
                }
                given
            }
            (None, Some(derived)) => derived,
            (None, None) => {
                return Err(Error::config("noise.r_e", "covariance is required"));
            }
        };
        NoiseSpec::new(family, r_e, self.noise.epsilon)
            .map_err(|e| Error::config("noise", e.to_string()))
    }

    fn resolve_y_hat(&self, m: usize, horizon: usize) -> Result<Vec<DVector<f64>>> {
        let check_dim = |path: &str, v: &[f64]| -> Result<DVector<f64>> {
            if v.len() != m {
                return Err(Error::config(path, format!("expected {m} entries")));
            }
            Ok(DVector::from_column_slice(v))
        };
        match &self.y_hat {
            YHatConfig::Constant { value } => {
                let v = check_dim("y_hat.value", value)?;
                Ok(vec![v; horizon])
            }
            YHatConfig::Sinusoid {
                amplitude,
                period,
                phase,
            } => {
                if *period <= 0.0 {
                    return Err(Error::config("y_hat.period", "must be positive"));
                }
                let amp = check_dim("y_hat.amplitude", amplitude)?;
                Ok((1..=horizon)
                    .map(|t| &amp * (std::f64::consts::TAU * (t as f64 + phase) / period).sin())
                    .collect())
            }
            YHatConfig::Alternating { value } => {
                let v = check_dim("y_hat.value", value)?;
                Ok((1..=horizon)
                    .map(|t| if t % 2 == 1 { v.clone() } else { -&v })
                    .collect())
            }
            YHatConfig::Explicit { values } => {
                if values.len() != horizon {
                    return Err(Error::config(
                        "y_hat.values",
                        format!("expected {horizon} rows"),
                    ));
                }
                values
                    .iter()
                    .enumerate()
                    .map(|(t, row)| check_dim(&format!("y_hat.values[{t}]"), row))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> serde_json::Value {
        serde_json::json!({
            "spec": {"k": [[1.0]], "beta": 1.0, "horizon": 12},
            "impulse": {"kind": "iid"},
            "noise": {"family": "gaussian", "r_e": [[1.0]]},
            "y_hat": {"kind": "constant", "value": [0.0]},
            "algorithms": [{"name": "afhc", "w": 3}],
            "samples": 10,
            "seed": 42,
            "output": "out/test"
        })
    }

    #[test]
    fn resolves_minimal_config() {
        let cfg: ExperimentConfig = serde_json::from_value(base_config()).unwrap();
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.spec.horizon(), 12);
        assert_eq!(resolved.policies, vec![ConfiguredPolicy::Afhc { w: 3 }]);
        assert_eq!(resolved.y_hat.len(), 12);
    }

    #[test]
    fn rejects_w_past_horizon() {
        let mut v = base_config();
        v["algorithms"][0]["w"] = serde_json::json!(12);
        let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
        match cfg.resolve() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "algorithms[0]"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_covariance() {
        let mut v = base_config();
        v["noise"] = serde_json::json!({"family": "gaussian"});
        let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
        match cfg.resolve() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "noise.r_e"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn kalman_supplies_innovation_covariance() {
        let mut v = base_config();
        v["impulse"] = serde_json::json!({
            "kind": "kalman",
            "a": [[0.5]], "b": [[1.0]], "c": [[1.0]],
            "q": [[1.0]], "r": [[0.0]], "s": [[0.0]]
        });
        v["noise"] = serde_json::json!({"family": "gaussian"});
        let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
        let resolved = cfg.resolve().unwrap();
        assert!((resolved.noise.r_e[(0, 0)] - 1.0).abs() < 1e-8);
        assert!(resolved.impulse.len_l() >= 1);
    }

    #[test]
    fn explicit_taps_and_alternating_targets() {
        let mut v = base_config();
        v["impulse"] = serde_json::json!({"kind": "explicit", "taps": [1.0, 0.5, 0.25]});
        v["y_hat"] = serde_json::json!({"kind": "alternating", "value": [2.0]});
        let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.impulse.len_l(), 2);
        assert_eq!(resolved.y_hat[0][0], 2.0);
        assert_eq!(resolved.y_hat[1][0], -2.0);
    }

    #[test]
    fn config_json_round_trip_is_stable() {
        let cfg: ExperimentConfig = serde_json::from_value(base_config()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let reparsed = ExperimentConfig::from_json(&text).unwrap();
        let text2 = serde_json::to_string(&reparsed).unwrap();
        assert_eq!(text, text2);
    }
}
