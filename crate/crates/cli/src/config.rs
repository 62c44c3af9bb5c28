//! Run configuration and fixed-parameter files (TOML).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use ptfm::arma::ArmaSpec;
use ptfm::csv_io::{ColumnSpec, MissingPolicy, Schema};
use ptfm::identification::{CandidateGrid, IdentifyConfig, OrderSearch};
use ptfm::model::{NoiseOrders, PtfmParams, TermParams, MAX_TRANSFER_ORDER};
use ptfm::risk::default_delta_x;
use ptfm::RationalLag;

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub identify: IdentifySection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Relative paths are resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_column: Option<String>,
    pub output: ColumnConfig,
    pub inputs: Vec<InputConfig>,
    #[serde(default)]
    pub missing: MissingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnConfig {
    pub name: String,
    #[serde(default)]
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    /// Increment used for the relative risk; 10 for temperature and
    /// humidity, 50 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifySection {
    /// `[p, q]` pairs of the prewhitening grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<[usize; 2]>>,
    pub max_delay: usize,
    pub ccf_band: f64,
    pub max_r: usize,
    pub max_s: usize,
    pub t_threshold: f64,
    pub residual_lags: usize,
    pub residual_alpha: f64,
}

impl Default for IdentifySection {
    fn default() -> Self {
        let base = IdentifyConfig::default();
        Self {
            grid: None,
            max_delay: base.max_delay,
            ccf_band: base.ccf_band,
            max_r: base.orders.max_r,
            max_s: base.orders.max_s,
            t_threshold: base.orders.t_threshold,
            residual_lags: base.orders.residual_lags,
            residual_alpha: base.orders.residual_alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub noise_ar: usize,
    pub noise_ma: usize,
    pub confidence_level: f64,
    pub max_iter: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { noise_ar: 1, noise_ma: 1, confidence_level: 0.95, max_iter: 500 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .map_err(|e| e.context(ConfigError))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| anyhow::Error::new(ConfigError).context(format!("{}: {e}", path.display())))?;
        if let Some(p) = &config.data.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.data.path = Some(base.join(p));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(anyhow::Error::new(ConfigError).context(msg));
        let id = &self.identify;
        if id.max_r > MAX_TRANSFER_ORDER || id.max_s > MAX_TRANSFER_ORDER {
            return fail(format!(
                "identify.max_r = {} and identify.max_s = {} must not exceed {MAX_TRANSFER_ORDER}",
                id.max_r, id.max_s
            ));
        }
        if !(id.ccf_band > 0.0) || !(id.t_threshold > 0.0) {
            return fail("identify.ccf_band and identify.t_threshold must be positive".into());
        }
        if !(id.residual_alpha > 0.0 && id.residual_alpha < 1.0) || id.residual_lags == 0 {
            return fail("identify.residual_alpha must lie in (0,1) and residual_lags must be >= 1".into());
        }
        if let Some(grid) = &id.grid {
            if grid.is_empty() || grid.iter().any(|[p, q]| *p > MAX_TRANSFER_ORDER || *q > MAX_TRANSFER_ORDER) {
                return fail(format!("identify.grid must be non-empty with p, q <= {MAX_TRANSFER_ORDER}"));
            }
        }
        let fit = &self.fit;
        if fit.noise_ar > MAX_TRANSFER_ORDER || fit.noise_ma > MAX_TRANSFER_ORDER {
            return fail(format!("fit.noise_ar and fit.noise_ma must not exceed {MAX_TRANSFER_ORDER}"));
        }
        if !(fit.confidence_level > 0.0 && fit.confidence_level < 1.0) || fit.max_iter == 0 {
            return fail("fit.confidence_level must lie in (0,1) and fit.max_iter must be >= 1".into());
        }
        if self.data.inputs.is_empty() {
            return fail("data.inputs must list at least one input".into());
        }
        let mut seen = BTreeSet::new();
        for input in &self.data.inputs {
            if !seen.insert(input.name.as_str()) || input.name == self.data.output.name {
                return fail(format!("column `{}` is listed twice", input.name));
            }
            if input.delta_x.is_some_and(|d| !(d > 0.0 && d.is_finite())) {
                return fail(format!("data.inputs `{}`: delta_x must be positive", input.name));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        Schema {
            index_column: self.data.index_column.clone(),
            output: ColumnSpec::new(&self.data.output.name, &self.data.output.unit),
            inputs: self.data.inputs.iter().map(|i| ColumnSpec::new(&i.name, &i.unit)).collect(),
            missing: self.data.missing,
        }
    }

    pub fn identify_config(&self) -> Result<IdentifyConfig> {
        let id = &self.identify;
        let grid = match &id.grid {
            Some(pairs) => CandidateGrid::new(
                pairs.iter().map(|[p, q]| ArmaSpec::new(*p, *q)).collect::<ptfm::Result<Vec<_>>>()?,
            )?,
            None => CandidateGrid::default(),
        };
        Ok(IdentifyConfig {
            grid,
            max_delay: id.max_delay,
            ccf_band: id.ccf_band,
            orders: OrderSearch {
                max_r: id.max_r,
                max_s: id.max_s,
                t_threshold: id.t_threshold,
                residual_lags: id.residual_lags,
                residual_alpha: id.residual_alpha,
            },
        })
    }

    pub fn noise(&self) -> NoiseOrders {
        NoiseOrders { ar: self.fit.noise_ar, ma: self.fit.noise_ma }
    }

    pub fn delta_x(&self, name: &str) -> f64 {
        self.data
            .inputs
            .iter()
            .find(|i| i.name == name)
            .and_then(|i| i.delta_x)
            .unwrap_or_else(|| default_delta_x(name))
    }

    pub fn unit(&self, name: &str) -> String {
        self.data.inputs.iter().find(|i| i.name == name).map(|i| i.unit.clone()).unwrap_or_default()
    }
}

/// Coefficients supplied by the user instead of estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    pub intercept: f64,
    #[serde(default)]
    pub noise_ar: Vec<f64>,
    #[serde(default)]
    pub noise_ma: Vec<f64>,
    pub inputs: Vec<FixedInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedInput {
    pub name: String,
    pub omega: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    pub delay: usize,
    #[serde(default)]
    pub reference: f64,
    #[serde(default)]
    pub delta_x: Option<f64>,
}

impl FixedParams {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read fixed parameters {}", path.display()))
            .map_err(|e| e.context(ConfigError))?;
        toml::from_str(&text).map_err(|e| anyhow::Error::new(ConfigError).context(format!("{}: {e}", path.display())))
    }

    pub fn params(&self) -> Result<PtfmParams> {
        let terms = self
            .inputs
            .iter()
            .map(|i| {
                let lag = RationalLag::new(i.omega.clone(), i.delta.clone(), i.delay)
                    .map_err(|e| anyhow::Error::new(ConfigError).context(format!("input `{}`: {e}", i.name)))?;
                Ok(TermParams { name: i.name.clone(), lag, reference: i.reference })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PtfmParams { intercept: self.intercept, terms, noise_ar: self.noise_ar.clone(), noise_ma: self.noise_ma.clone() })
    }

    pub fn delta_x(&self, name: &str) -> Option<f64> {
        self.inputs.iter().find(|i| i.name == name).and_then(|i| i.delta_x)
    }
}
