//! Serializable test reports with a stable JSON schema.
//!
//! Schema keys: `{method, n, d, k, kernel: {kind, bandwidth}, statistics:
//! {...}, z, p_value, alpha, reject, M, seed, wall_ms}`. Fields that do
//! not apply to a method are emitted as null so the shape never changes.

use crate::estimator::EcmmdResult;
use crate::kernels::Kernel;
use crate::resampling::{DerandomizedResult, FiniteSampleResult};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelInfo {
    pub kind: String,
    pub bandwidth: Option<f64>,
}

impl From<&Kernel> for KernelInfo {
    fn from(kern: &Kernel) -> Self {
        KernelInfo {
            kind: kern.kind_name().to_string(),
            bandwidth: kern.bandwidth(),
        }
    }
}

/// Method-specific statistic values; unset entries serialize as null.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Statistics {
    pub t_n: Option<f64>,
    pub eta_n: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub d_n: Option<f64>,
    pub tau_hat: Option<f64>,
    pub p_m: Option<f64>,
    pub eta_values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TestReport {
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub kernel: KernelInfo,
    pub statistics: Statistics,
    pub z: Option<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub wall_ms: f64,
}

impl TestReport {
    pub fn from_asymptotic(
        res: &EcmmdResult,
        covariate_dim: usize,
        kern: &Kernel,
        seed: Option<u64>,
    ) -> Self {
        TestReport {
            method: "asymptotic".into(),
            n: res.n,
            d: covariate_dim,
            k: res.k,
            kernel: kern.into(),
            statistics: Statistics {
                t_n: Some(res.t_n),
                eta_n: Some(res.eta_n),
                sigma_hat: Some(res.sigma_hat),
                ..Statistics::default()
            },
            z: Some(res.z_score),
            p_value: res.p_value,
            alpha: res.alpha,
            reject: res.reject,
            m: None,
            seed,
            wall_ms: 0.0,
        }
    }

    pub fn from_finite_sample(
        res: &FiniteSampleResult,
        covariate_dim: usize,
        alpha: f64,
    ) -> Self {
        TestReport {
            method: "finite_sample".into(),
            n: res.n,
            d: covariate_dim,
            k: res.k,
            kernel: (&res.kernel).into(),
            statistics: Statistics {
                p_m: Some(res.p_m),
                eta_values: Some(res.eta_values.clone()),
                ..Statistics::default()
            },
            z: None,
            p_value: res.p_m,
            alpha,
            reject: res.reject(alpha),
            m: Some(res.m),
            seed: Some(res.seed),
            wall_ms: 0.0,
        }
    }

    pub fn from_derandomized(res: &DerandomizedResult, covariate_dim: usize) -> Self {
        TestReport {
            method: "derandomized".into(),
            n: res.n,
            d: covariate_dim,
            k: res.k,
            kernel: (&res.kernel).into(),
            statistics: Statistics {
                d_n: Some(res.d_n),
                tau_hat: Some(res.tau_hat),
                ..Statistics::default()
            },
            z: Some(res.z_score),
            p_value: res.p_value,
            alpha: res.alpha,
            reject: res.reject,
            m: Some(res.m_n),
            seed: Some(res.seed),
            wall_ms: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_through_json() {
        let report = TestReport {
            method: "asymptotic".into(),
            n: 100,
            d: 2,
            k: 10,
            kernel: KernelInfo {
                kind: "gaussian".into(),
                bandwidth: Some(1.25),
            },
            statistics: Statistics {
                t_n: Some(0.031),
                eta_n: Some(0.98),
                sigma_hat: Some(1.42),
                ..Statistics::default()
            },
            z: Some(0.69),
            p_value: 0.49,
            alpha: 0.05,
            reject: false,
            m: None,
            seed: Some(7),
            wall_ms: 12.5,
        };
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: TestReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
        // Schema keys present, including nulls and the renamed M.
        for key in [
            "\"method\"",
            "\"kernel\"",
            "\"statistics\"",
            "\"p_value\"",
            "\"M\"",
            "\"wall_ms\"",
        ] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
    }
}
