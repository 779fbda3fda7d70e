//! Run configuration with flag > config file > environment > default
//! precedence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use demandcast_core::data::SplitSpec;
use demandcast_core::eval::EvalConfig;
use demandcast_core::features::{FeatureSelector, TimeEncoding};
use demandcast_core::training::{LossSteps, TrainConfig};

use crate::CliError;

/// Environment variable that replaces the built-in default seed. Explicit
/// `--seed` flags and config-file seeds still win.
pub const SEED_ENV_VAR: &str = "DEMANDCAST_SEED";

pub const DEFAULT_SEED: u64 = 42;

/// Optional overrides as they appear in a JSON config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub seed: Option<u64>,
    pub hidden_size: Option<usize>,
    pub window_len: Option<usize>,
    pub features: Option<String>,
    pub time_encoding: Option<String>,
    pub split: Option<SplitSpec>,
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub grad_clip_norm: Option<f64>,
    pub batch: Option<usize>,
    pub input_noise_std: Option<f64>,
    pub loss_steps: Option<String>,
    pub horizon: Option<usize>,
    pub cluster: Option<u32>,
    pub month: Option<String>,
}

impl PartialConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    /// Later-applied layers overwrite earlier ones field by field.
    pub fn overlay(mut self, over: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if over.$field.is_some() { self.$field = over.$field; })*
            };
        }
        take!(
            seed, hidden_size, window_len, features, time_encoding, split,
            learning_rate, max_epochs, patience, grad_clip_norm, batch,
            input_noise_std, loss_steps, horizon, cluster, month
        );
        self
    }
}

/// Fully resolved configuration for one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub hidden_size: usize,
    pub window_len: usize,
    pub features: FeatureSelector,
    pub time_encoding: TimeEncoding,
    pub split: SplitSpec,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub grad_clip_norm: f64,
    pub batch: usize,
    pub input_noise_std: f64,
    pub loss_steps: LossSteps,
    pub horizon: usize,
    pub cluster: u32,
    pub month: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            seed: DEFAULT_SEED,
            hidden_size: 32,
            window_len: 48,
            features: FeatureSelector::All,
            time_encoding: TimeEncoding::Concat,
            split: SplitSpec::default(),
            learning_rate: train.learning_rate,
            max_epochs: train.max_epochs,
            patience: train.patience,
            grad_clip_norm: train.grad_clip_norm,
            batch: train.batch,
            input_noise_std: train.input_noise_std,
            loss_steps: train.loss_steps,
            horizon: 144,
            cluster: 1,
            month: None,
        }
    }
}

impl RunConfig {
    /// Applies the precedence chain: defaults, then the environment seed,
    /// then the config file, then command-line flags.
    pub fn resolve(
        config_path: Option<&Path>,
        flags: PartialConfig,
    ) -> Result<RunConfig, CliError> {
        let mut layered = PartialConfig::default();
        if let Ok(value) = std::env::var(SEED_ENV_VAR) {
            let seed: u64 = value.parse().map_err(|_| {
                CliError::usage(format!("{SEED_ENV_VAR} must be an unsigned integer, got '{value}'"))
            })?;
            layered.seed = Some(seed);
        }
        if let Some(path) = config_path {
            layered = layered.overlay(PartialConfig::load(path)?);
        }
        layered = layered.overlay(flags);

        let defaults = RunConfig::default();
        let features = match &layered.features {
            None => defaults.features,
            Some(raw) => raw.parse().map_err(CliError::usage)?,
        };
        let time_encoding = match layered.time_encoding.as_deref() {
            None => defaults.time_encoding,
            Some("concat") => TimeEncoding::Concat,
            Some("sequential") => TimeEncoding::Sequential,
            Some(other) => {
                return Err(CliError::usage(format!(
                    "unknown time encoding '{other}' (expected concat or sequential)"
                )))
            }
        };
        let loss_steps = match layered.loss_steps.as_deref() {
            None => defaults.loss_steps,
            Some("every") => LossSteps::Every,
            Some("final") => LossSteps::Final,
            Some(other) => {
                return Err(CliError::usage(format!(
                    "unknown loss mode '{other}' (expected every or final)"
                )))
            }
        };
        if let Some(split) = &layered.split {
            split
                .validate()
                .map_err(|e| CliError::usage(e.to_string()))?;
        }

        Ok(RunConfig {
            seed: layered.seed.unwrap_or(defaults.seed),
            hidden_size: layered.hidden_size.unwrap_or(defaults.hidden_size),
            window_len: layered.window_len.unwrap_or(defaults.window_len),
            features,
            time_encoding,
            split: layered.split.unwrap_or(defaults.split),
            learning_rate: layered.learning_rate.unwrap_or(defaults.learning_rate),
            max_epochs: layered.max_epochs.unwrap_or(defaults.max_epochs),
            patience: layered.patience.unwrap_or(defaults.patience),
            grad_clip_norm: layered.grad_clip_norm.unwrap_or(defaults.grad_clip_norm),
            batch: layered.batch.unwrap_or(defaults.batch),
            input_noise_std: layered.input_noise_std.unwrap_or(defaults.input_noise_std),
            loss_steps,
            horizon: layered.horizon.unwrap_or(defaults.horizon),
            cluster: layered.cluster.unwrap_or(defaults.cluster),
            month: layered.month,
        })
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            train: TrainConfig {
                learning_rate: self.learning_rate,
                max_epochs: self.max_epochs,
                patience: self.patience,
                grad_clip_norm: self.grad_clip_norm,
                batch: self.batch,
                seed: self.seed,
                loss_steps: self.loss_steps,
                input_noise_std: self.input_noise_std,
            },
            split: self.split,
            hidden_size: self.hidden_size,
            window_len: self.window_len,
            selector: self.features,
            time_encoding: self.time_encoding,
            init_seed: self.seed,
        }
    }

    /// Parses `YYYY-MM` into (year, month).
    pub fn month_pair(&self) -> Result<Option<(i32, u32)>, CliError> {
        match &self.month {
            None => Ok(None),
            Some(raw) => parse_month(raw).map(Some),
        }
    }
}

pub fn parse_month(raw: &str) -> Result<(i32, u32), CliError> {
    let bad = || CliError::usage(format!("expected month as YYYY-MM, got '{raw}'"));
    let (y, m) = raw.split_once('-').ok_or_else(bad)?;
    let year: i32 = y.parse().map_err(|_| bad())?;
    let month: u32 = m.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&month) {
        return Err(bad());
    }
    Ok((year, month))
}

pub fn parse_split(raw: &str) -> Result<SplitSpec, CliError> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!(
            "expected split as train,val,test fractions, got '{raw}'"
        )));
    }
    let mut fracs = [0.0; 3];
    for (slot, part) in fracs.iter_mut().zip(parts.iter()) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad split fraction '{part}'")))?;
    }
    SplitSpec::new(fracs[0], fracs[1], fracs[2]).map_err(|e| CliError::usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply_without_any_layer() {
        let cfg = RunConfig::resolve(None, PartialConfig::default()).unwrap();
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.hidden_size, 32);
        assert_eq!(cfg.window_len, 48);
        assert_eq!(cfg.features, FeatureSelector::All);
        assert_eq!(cfg.horizon, 144);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 7, "hidden_size": 8, "batch": 4}"#).unwrap();
        let flags = PartialConfig {
            seed: Some(99),
            ..PartialConfig::default()
        };
        let cfg = RunConfig::resolve(Some(&path), flags).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.hidden_size, 8);
        assert_eq!(cfg.batch, 4);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"hiden_size": 8}"#).unwrap();
        assert!(RunConfig::resolve(Some(&path), PartialConfig::default()).is_err());
    }

    #[test]
    fn month_and_split_parsers() {
        assert_eq!(parse_month("2015-02").unwrap(), (2015, 2));
        assert!(parse_month("2015-13").is_err());
        assert!(parse_month("201502").is_err());

        let split = parse_split("0.6,0.2,0.2").unwrap();
        assert_eq!(split.train_frac, 0.6);
        assert!(parse_split("0.6,0.4").is_err());
        assert!(parse_split("0.5,0.2,0.2").is_err());
    }
}
