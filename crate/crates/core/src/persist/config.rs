use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CmapssOptions, FleetSpec, Subset, TaskSpec};
use crate::error::{Error, Result};
use crate::meta::{LossWeights, MetaConfig, Objective};
use crate::nn::ModelConfig;

/// Environment variable naming the default directory of C-MAPSS files.
pub const DATA_ROOT_ENV: &str = "MKDPINN_DATA_ROOT";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Cmapss,
    Synthetic,
    Processed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub subset: Subset,
    /// Directory of the C-MAPSS text files; falls back to the environment.
    pub root: Option<PathBuf>,
    pub cmapss: CmapssOptions,
    pub fleet: FleetSpec,
    /// Window length of synthetic samples.
    pub fleet_window: usize,
    /// Synthetic units held out from meta-training for adaptation.
    pub holdout_units: usize,
    /// Directory written by `preprocess`.
    pub processed: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Cmapss,
            subset: Subset::FD001,
            root: None,
            cmapss: CmapssOptions::default(),
            fleet: FleetSpec::default(),
            fleet_window: 30,
            holdout_units: 5,
            processed: None,
        }
    }
}

impl DatasetConfig {
    /// `root`, else the data-root environment variable.
    pub fn data_root(&self) -> Result<PathBuf> {
        if let Some(r) = &self.root {
            return Ok(r.clone());
        }
        match std::env::var_os(DATA_ROOT_ENV) {
            Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
            _ => Err(Error::Config(format!(
                "dataset.root: not set and {DATA_ROOT_ENV} is empty; point it at the directory holding train_FD00x.txt"
            ))),
        }
    }

    /// `(time_steps, features)` of the samples this dataset produces, when
    /// known without reading files.
    pub fn window_shape(&self) -> Option<(usize, usize)> {
        match self.kind {
            DatasetKind::Cmapss => Some((self.cmapss.window, 14)),
            DatasetKind::Synthetic => Some((self.fleet_window, self.fleet.features)),
            DatasetKind::Processed => None,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.kind {
            DatasetKind::Cmapss => out.extend(self.cmapss.problems().into_iter().map(|p| format!("dataset.cmapss.{p}"))),
            DatasetKind::Synthetic => {
                out.extend(self.fleet.problems().into_iter().map(|p| format!("dataset.{p}")));
                if self.fleet_window == 0 || self.fleet_window > self.fleet.min_life {
                    out.push(format!(
                        "dataset.fleet_window: {} must lie in [1, fleet.min_life = {}]",
                        self.fleet_window, self.fleet.min_life
                    ));
                }
                if self.holdout_units >= self.fleet.units {
                    out.push(format!(
                        "dataset.holdout_units: {} leaves no training units out of {}",
                        self.holdout_units, self.fleet.units
                    ));
                }
            }
            DatasetKind::Processed => {
                if self.processed.is_none() {
                    out.push("dataset.processed: required when kind is \"processed\"".into());
                }
            }
        }
        out
    }
}

/// Everything a run needs besides the data files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub meta: MetaConfig,
    pub loss: LossWeights,
    pub tasks: TaskSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            meta: MetaConfig::default(),
            loss: LossWeights::default(),
            tasks: TaskSpec::default(),
            seed: 0,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    /// Every violated invariant as a `path.to.field: problem` line.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.dataset.problems();
        out.extend(self.model.problems());
        out.extend(self.meta.problems());
        out.extend(self.loss.problems());
        out.extend(self.tasks.problems());
        if let Some((t, f)) = self.dataset.window_shape() {
            if self.model.hsm.time_steps != t {
                out.push(format!(
                    "model.hsm.time_steps: {} does not match the dataset window length {t}",
                    self.model.hsm.time_steps
                ));
            }
            if self.model.hsm.input_features != f {
                out.push(format!(
                    "model.hsm.input_features: {} does not match the dataset feature count {f}",
                    self.model.hsm.input_features
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().as_slice() {
            [] => Ok(()),
            p => Err(Error::Config(p.join("; "))),
        }
    }

    pub fn objective(&self, label_scale: f64) -> Objective {
        Objective::new(self.model.clone(), self.loss, label_scale)
    }
}

/// Parse a JSON document over the defaults. Unknown keys and type
/// mismatches are reported with the path to the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("{path}: {inner}"))
        }
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parse and check every invariant.
pub fn load_valid_config(path: &Path) -> Result<RunConfig> {
    let cfg = load_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.meta.inner_lr, 0.001);
        assert_eq!(cfg.meta.inner_steps, 8);
        assert_eq!(cfg.meta.inner_batch_size, 64);
        assert_eq!(cfg.meta.meta_batch_size, 5);
        assert_eq!(cfg.meta.outer_rate, 0.1);
        assert_eq!(cfg.meta.epochs, 50);
        assert_eq!(cfg.meta.validation_fraction, 0.1);
        assert_eq!(cfg.meta.shots, 15);
        assert_eq!(cfg.model.hsm.dropout_rate, 0.1);
        assert_eq!(cfg.dataset.cmapss.rul_cap, 125.0);
        assert_eq!(cfg.dataset.cmapss.window, 15);
        assert!(cfg.problems().is_empty());
    }

    #[test]
    fn negative_outer_rate_names_the_field() {
        let cfg = parse_config(r#"{"meta": {"outer_rate": -1}}"#).unwrap();
        let p = cfg.problems();
        assert_eq!(p.len(), 1);
        assert!(p[0].starts_with("meta.outer_rate"), "{p:?}");
    }

    #[test]
    fn unknown_keys_and_type_errors_are_rejected() {
        let e = parse_config(r#"{"foo": 1}"#).unwrap_err().to_string();
        assert!(e.contains("foo"), "{e}");
        let e = parse_config(r#"{"meta": {"inner_stepz": 3}}"#).unwrap_err().to_string();
        assert!(e.contains("meta") && e.contains("inner_stepz"), "{e}");
        let e = parse_config(r#"{"model": {"hsm": {"embed_dim": "wide"}}}"#).unwrap_err().to_string();
        assert!(e.contains("model.hsm.embed_dim"), "{e}");
    }

    #[test]
    fn merging_is_idempotent() {
        let cfg = parse_config(r#"{"seed": 7, "meta": {"epochs": 3}}"#).unwrap();
        let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.problems(), again.problems());
    }

    #[test]
    fn window_mismatch_is_reported() {
        let cfg = parse_config(r#"{"dataset": {"kind": "synthetic"}}"#).unwrap();
        let p = cfg.problems();
        assert!(p.iter().any(|s| s.starts_with("model.hsm.time_steps")));
        assert!(p.iter().any(|s| s.starts_with("model.hsm.input_features")));
    }
}
