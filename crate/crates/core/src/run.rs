//! Dataset assembly and training entry points shared by the command line
//! and the test suites.

use crate::data::cache::{Manifest, ProcessedDataset};
use crate::data::{
    build_meta_tasks, fleet_windows, load_cmapss, prepare_cmapss, synthesize_degradation_fleet, ConditionModel,
    MetaTask, UnitWindows, WindowShape,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_cmapss_last_point, evaluate_few_shot, mean_baseline, run_ablation, AblationTable, FewShotEval,
    LastPointEval, MetricsReport,
};
use crate::meta::{meta_train, Objective, TrainOutcome};
use crate::nn::ParameterSet;
use crate::persist::{DatasetKind, RunConfig};

/// How the evaluation units are scored.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalProtocol {
    /// One prediction from each unit's final window against `true_rul`.
    LastPoint { true_rul: Vec<f64>, cap: f64 },
    /// Support windows drawn from each unit, the rest is the query set.
    FewShot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub source: String,
    pub train: Vec<UnitWindows>,
    pub eval: Vec<UnitWindows>,
    pub protocol: EvalProtocol,
    pub window: WindowShape,
    pub time_scale: f64,
    pub label_scale: f64,
    pub normalization: Option<ConditionModel>,
}

impl Dataset {
    pub fn to_processed(&self, seed: u64) -> ProcessedDataset {
        let mut manifest = Manifest::new(self.source.clone(), self.window, self.time_scale, self.label_scale, seed);
        manifest.normalization = self.normalization.clone();
        ProcessedDataset {
            manifest,
            train: self.train.clone(),
            test: self.eval.clone(),
        }
    }

    /// Sources starting with `cmapss` are scored at the last point, all
    /// others few-shot.
    pub fn from_processed(p: ProcessedDataset, cap: f64) -> Self {
        let protocol = if p.manifest.source.starts_with("cmapss") {
            EvalProtocol::LastPoint {
                true_rul: p
                    .test
                    .iter()
                    .map(|u| u.windows.last().map_or(0.0, |w| w.rul))
                    .collect(),
                cap,
            }
        } else {
            EvalProtocol::FewShot
        };
        Self {
            source: p.manifest.source,
            train: p.train,
            eval: p.test,
            protocol,
            window: p.manifest.window,
            time_scale: p.manifest.time_scale,
            label_scale: p.manifest.label_scale,
            normalization: p.manifest.normalization,
        }
    }
}

/// Build the dataset described by `cfg.dataset`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.dataset;
    match d.kind {
        DatasetKind::Cmapss => {
            let split = load_cmapss(&d.data_root()?, d.subset)?;
            let prep = prepare_cmapss(&split, &d.cmapss)?;
            if !prep.skipped_test.is_empty() {
                log::warn!("{} test unit(s) shorter than the window were skipped", prep.skipped_test.len());
            }
            Ok(Dataset {
                source: format!("cmapss:{}", d.subset),
                train: prep.train,
                eval: prep.test,
                protocol: EvalProtocol::LastPoint {
                    true_rul: prep.test_rul,
                    cap: d.cmapss.rul_cap,
                },
                window: WindowShape {
                    time_steps: d.cmapss.window,
                    features: 14,
                },
                time_scale: prep.time_scale,
                label_scale: d.cmapss.rul_cap,
                normalization: Some(prep.model),
            })
        }
        DatasetKind::Synthetic => {
            let units = synthesize_degradation_fleet(&d.fleet, cfg.seed)?;
            let n_train = units.len().checked_sub(d.holdout_units).filter(|&n| n > 0).ok_or_else(|| {
                Error::Config(format!("dataset.holdout_units: {} leaves no training units", d.holdout_units))
            })?;
            let max_life = units[..n_train].iter().map(|u| u.life()).max().expect("non-empty") as f64;
            let windows = fleet_windows(&units, d.fleet_window, max_life)?;
            let (train, eval) = windows.split_at(n_train);
            Ok(Dataset {
                source: "synthetic".into(),
                train: train.to_vec(),
                eval: eval.to_vec(),
                protocol: EvalProtocol::FewShot,
                window: WindowShape {
                    time_steps: d.fleet_window,
                    features: d.fleet.features,
                },
                time_scale: max_life,
                label_scale: max_life,
                normalization: None,
            })
        }
        DatasetKind::Processed => {
            let dir = d
                .processed
                .as_ref()
                .ok_or_else(|| Error::Config("dataset.processed: required when kind is \"processed\"".into()))?;
            Ok(Dataset::from_processed(
                crate::data::cache::read_processed(dir)?,
                d.cmapss.rul_cap,
            ))
        }
    }
}

/// Meta-tasks of the training units.
pub fn training_tasks(cfg: &RunConfig, data: &Dataset) -> Result<Vec<MetaTask>> {
    build_meta_tasks(&data.train, &cfg.tasks, cfg.seed)
}

/// Meta-train from the seeded initialization.
pub fn train(cfg: &RunConfig, data: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tasks = training_tasks(cfg, data)?;
    let init: ParameterSet = cfg.model.init_seeded(cfg.seed);
    meta_train(&tasks, &cfg.objective(data.label_scale), &cfg.meta, init, cfg.seed)
}

/// Outcome of scoring parameters under a dataset's protocol.
#[derive(Clone, Debug, PartialEq)]
pub enum Evaluation {
    LastPoint {
        eval: LastPointEval,
        /// Constant mean-training-label predictor on the same units.
        baseline: MetricsReport,
    },
    FewShot(FewShotEval),
}

impl Evaluation {
    /// The last-point report, or the pooled post-adaptation report.
    pub fn headline(&self) -> &MetricsReport {
        match self {
            Evaluation::LastPoint { eval, .. } => &eval.report,
            Evaluation::FewShot(f) => &f.adapted,
        }
    }
}

/// Score `params` on the evaluation units. Few-shot datasets adapt with
/// `shots` support windows per unit using the configured adaptation loop.
pub fn evaluate(
    cfg: &RunConfig,
    data: &Dataset,
    objective: &Objective,
    params: &ParameterSet,
    shots: usize,
) -> Result<Evaluation> {
    match &data.protocol {
        EvalProtocol::LastPoint { true_rul, cap } => Ok(Evaluation::LastPoint {
            eval: evaluate_cmapss_last_point(objective, params, &data.eval, true_rul, *cap)?,
            baseline: mean_baseline(&data.train, true_rul, *cap)?,
        }),
        EvalProtocol::FewShot => Ok(Evaluation::FewShot(evaluate_few_shot(
            objective,
            params,
            &data.eval,
            shots,
            &cfg.meta.adapt_loop(),
            cfg.seed,
        )?)),
    }
}

/// Train the four ablation variants from one initialization and score each
/// with the dataset's protocol at `cfg.meta.shots`.
pub fn ablate(cfg: &RunConfig, data: &Dataset) -> Result<AblationTable> {
    cfg.validate()?;
    let tasks = training_tasks(cfg, data)?;
    let init = cfg.model.init_seeded(cfg.seed);
    run_ablation(
        &tasks,
        &cfg.objective(data.label_scale),
        &cfg.meta,
        &init,
        cfg.seed,
        |_, objective, trained| Ok(evaluate(cfg, data, objective, &trained.best, cfg.meta.shots)?.headline().clone()),
    )
}
