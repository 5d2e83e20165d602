use std::path::{Path, PathBuf};

use oma_va_core::market::DeterministicVolModel;
use oma_va_core::{ContractSpec, GridSpec, HestonParams, Market};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Price,
    Hedge,
    Decompose2p,
    DecomposeMp,
    Attribution,
    Figures,
}

/// True market model. `r` defaults to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelConfig {
    Bs {
        v: f64,
        #[serde(default)]
        r: f64,
    },
    Heston(HestonParams),
    Detvol {
        w: Vec<f64>,
        #[serde(default)]
        r: f64,
    },
}

impl ModelConfig {
    pub fn rate(&self) -> f64 {
        match self {
            ModelConfig::Bs { r, .. } | ModelConfig::Detvol { r, .. } => *r,
            ModelConfig::Heston(p) => p.rate,
        }
    }

    pub fn market(&self, spec: &ContractSpec) -> Result<Market, CliError> {
        let market = match self {
            ModelConfig::Bs { v, r } => Market::Bs { variance: *v, rate: *r },
            ModelConfig::Heston(p) => Market::Heston(*p),
            ModelConfig::Detvol { w, r } => Market::DetVol(DeterministicVolModel {
                variance_per_period: w.clone(),
                period: spec.delta,
                rate: *r,
            }),
        };
        market.validate().map_err(|e| CliError::config("model", e))?;
        Ok(market)
    }

    pub fn detvol(&self, spec: &ContractSpec) -> Option<DeterministicVolModel> {
        match self {
            ModelConfig::Detvol { w, r } => Some(DeterministicVolModel {
                variance_per_period: w.clone(),
                period: spec.delta,
                rate: *r,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub contract: ContractSpec,
    pub model: ModelConfig,
    pub bs_mark_v: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Rebalance strides for hedging, in simulation steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strides: Option<Vec<usize>>,
    /// Mark variances for hedging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_list: Option<Vec<f64>>,
    /// Variances of the value-function curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_function_v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub config: &'a RunConfig,
    pub library_version: &'a str,
    pub git_hash: &'a str,
}

impl RunConfig {
    /// Reads a config file, or the `config` object of a run manifest.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            field: "config".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::config("config", e))?;
        if let Some(inner) = value.get_mut("config").filter(|_| value_is_manifest(&text)) {
            value = inner.take();
        }
        let config: RunConfig = serde_json::from_value(value).map_err(|e| CliError::config(field_of(&e.to_string()), e))?;
        Ok(config)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths.unwrap_or(match self.experiment {
            Experiment::Decompose2p => 100_000,
            Experiment::Attribution => 1,
            _ => 100,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps.unwrap_or(match self.experiment {
            Experiment::Decompose2p | Experiment::Attribution => 250,
            _ => 252,
        })
    }

    /// Every step, and monthly when the step count divides into 12.
    pub fn strides(&self) -> Vec<usize> {
        self.strides.clone().unwrap_or_else(|| {
            let n = self.n_steps();
            if n.is_multiple_of(12) && n > 12 {
                vec![1, n / 12]
            } else {
                vec![1]
            }
        })
    }

    pub fn v_list(&self) -> Vec<f64> {
        self.v_list.clone().unwrap_or_else(|| match self.experiment {
            Experiment::Figures => vec![0.04, 0.09],
            _ => vec![self.bs_mark_v],
        })
    }

    pub fn value_function_v(&self) -> Vec<f64> {
        self.value_function_v
            .clone()
            .unwrap_or_else(|| vec![0.01, 0.04, 0.09, 0.16])
    }

    pub fn grid(&self) -> GridSpec {
        self.grid.unwrap_or_default()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.contract.validate().map_err(|e| CliError::config("contract", e))?;
        self.model.market(&self.contract)?;
        positive("bs_mark_v", self.bs_mark_v)?;
        if self.n_paths() == 0 {
            return Err(CliError::invalid("n_paths", "must be >= 1"));
        }
        if self.n_steps() == 0 {
            return Err(CliError::invalid("n_steps", "must be >= 1"));
        }
        for &s in &self.strides() {
            if s == 0 || !self.n_steps().is_multiple_of(s) {
                return Err(CliError::invalid("strides", format!("{s} does not divide n_steps = {}", self.n_steps())));
            }
        }
        for &v in &self.v_list() {
            positive("v_list", v)?;
        }
        for &v in &self.value_function_v() {
            positive("value_function_v", v)?;
        }
        if let Some(g) = &self.grid {
            g.nodes(&self.contract).map_err(|e| CliError::config("grid", e))?;
        }
        let heston = matches!(self.model, ModelConfig::Heston(_));
        let n = self.contract.n_periods;
        match self.experiment {
            Experiment::Decompose2p if n != 2 => {
                return Err(CliError::invalid("contract.n_periods", "decompose2p needs n_periods = 2"));
            }
            Experiment::Hedge | Experiment::Figures if heston && n != 2 => {
                return Err(CliError::invalid(
                    "contract.n_periods",
                    "implied variance under heston needs n_periods = 2",
                ));
            }
            Experiment::DecomposeMp if n < 3 => {
                return Err(CliError::invalid("contract.n_periods", "decompose_mp needs n_periods >= 3"));
            }
            Experiment::DecomposeMp | Experiment::Attribution if self.model.detvol(&self.contract).is_none() => {
                return Err(CliError::invalid("model", "needs a detvol model"));
            }
            _ => {}
        }
        Ok(())
    }
}

fn value_is_manifest(text: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(text)
        .map(|v| v.get("library_version").is_some())
        .unwrap_or(false)
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::invalid(field, format!("{v} must be > 0")))
    }
}

/// Best-effort field name from a serde error message.
fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".into())
}
