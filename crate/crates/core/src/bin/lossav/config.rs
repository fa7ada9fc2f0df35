//! JSON run configuration. Every field is optional; command-line flags take
//! precedence over the file, and the file over built-in defaults.

use std::path::{Path, PathBuf};

use lossav::io::FORMAT_VERSION;
use lossav::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub anomalies: AnomalySection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub policy: PolicySection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Option<String>,
    pub lambda: Option<f64>,
    pub mu_phi: Option<f64>,
    pub sigma_phi: Option<f64>,
    pub mu_eps: Option<f64>,
    pub sigma_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: Option<u64>,
    pub binned_only: Option<bool>,
    pub record_rejected: Option<bool>,
    pub bin_range: Option<f64>,
    pub bin_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySection {
    pub input: Option<PathBuf>,
    pub degree: Option<usize>,
    /// A number, or `"rot"` for the rule-of-thumb choice.
    pub bandwidth: Option<serde_json::Value>,
    pub bootstrap: Option<usize>,
    pub range: Option<[f64; 2]>,
    pub resample_observations: Option<bool>,
    pub bin_range: Option<f64>,
    pub bin_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub input: Option<PathBuf>,
    pub raw_props: Option<bool>,
    pub family: Option<String>,
    pub optimal_weights: Option<bool>,
    pub range: Option<f64>,
    pub include_zero_bin: Option<bool>,
    pub restrict_lambda: Option<bool>,
    pub bootstrap: Option<usize>,
    pub analytic_cov: Option<bool>,
    pub start: Option<[f64; 3]>,
    pub bandwidth: Option<f64>,
    pub degree: Option<usize>,
    pub mu_eps: Option<f64>,
    pub sigma_eps: Option<f64>,
    pub gof_scale: Option<f64>,
    pub qlr_scale: Option<f64>,
    pub naive_qlr: Option<bool>,
    pub bin_range: Option<f64>,
    pub bin_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub lambda_grid: Option<String>,
    pub delta_sd: Option<f64>,
    pub delta: Option<f64>,
    pub nodes: Option<usize>,
    pub mechanism_points: Option<usize>,
    pub eta_scale: Option<f64>,
    pub eta_nodes: Option<usize>,
    pub mc_n: Option<u64>,
    pub c: Option<f64>,
    pub pbar: Option<f64>,
    pub psi: Option<f64>,
    pub wage: Option<f64>,
    pub wages: Option<PathBuf>,
}

fn check_file(name: &'static str, p: &Option<PathBuf>) -> Result<()> {
    match p {
        Some(p) if !p.is_file() => Err(Error::InvalidParam {
            name,
            reason: format!("file `{}` does not exist", p.display()),
        }),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(v) = &self.format_version {
            if v != FORMAT_VERSION {
                return Err(Error::InvalidParam {
                    name: "format_version",
                    reason: format!("expected {FORMAT_VERSION}, got {v}"),
                });
            }
        }
        check_file("anomalies.input", &self.anomalies.input)?;
        check_file("estimate.input", &self.estimate.input)?;
        check_file("policy.wages", &self.policy.wages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"model": {"lamda": 1.2}}"#).unwrap_err();
        assert!(err.to_string().contains("lamda"));
        let ok: RunConfig = serde_json::from_str(r#"{"seed": 3, "model": {"lambda": 1.2}}"#).unwrap();
        assert_eq!(ok.model.lambda, Some(1.2));
    }

    #[test]
    fn missing_input_file_fails_validation() {
        let cfg: RunConfig = serde_json::from_str(r#"{"estimate": {"input": "/no/such/file.csv"}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
