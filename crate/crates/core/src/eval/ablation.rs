use std::io::Write;

use crate::data::MetaTask;
use crate::error::{Error, Result};
use crate::eval::metrics::MetricsReport;
use crate::meta::{joint_train, meta_train, MetaConfig, Objective, TrainOutcome};
use crate::nn::ParameterSet;

/// One cell of the {physics loss} × {meta-training} grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub physics: bool,
    pub meta: bool,
}

pub const VARIANTS: [Variant; 4] = [
    Variant {
        name: "Base Learner",
        physics: false,
        meta: false,
    },
    Variant {
        name: "KDPINN",
        physics: true,
        meta: false,
    },
    Variant {
        name: "Meta Learner",
        physics: false,
        meta: true,
    },
    Variant {
        name: "MKDPINN",
        physics: true,
        meta: true,
    },
];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variant", "physics_loss", "meta_training", "seed", "rmse", "mae", "r2", "score", "n"])?;
        for r in &self.rows {
            w.write_record([
                r.variant.name.to_string(),
                r.variant.physics.to_string(),
                r.variant.meta.to_string(),
                self.seed.to_string(),
                format!("{:.16e}", r.report.rmse),
                format!("{:.16e}", r.report.mae),
                format!("{:.16e}", r.report.r2),
                format!("{:.16e}", r.report.score),
                r.report.n.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("ablation table", e))?;
        Ok(())
    }
}

/// Train every variant from the same initial parameters and seed, then
/// score each with `evaluate(objective, trained)`. Without physics the
/// physics weight is set to zero; without meta-training the model is
/// trained jointly on the pooled task data.
pub fn run_ablation<F>(
    tasks: &[MetaTask],
    objective: &Objective,
    cfg: &MetaConfig,
    init: &ParameterSet,
    seed: u64,
    mut evaluate: F,
) -> Result<AblationTable>
where
    F: FnMut(&Variant, &Objective, &TrainOutcome) -> Result<MetricsReport>,
{
    let mut rows = Vec::with_capacity(VARIANTS.len());
    for v in &VARIANTS {
        let mut obj = objective.clone();
        if !v.physics {
            obj.weights.physics = 0.0;
        } else if obj.weights.physics == 0.0 {
            obj.weights.physics = 1.0;
        }
        let trained = if v.meta {
            meta_train(tasks, &obj, cfg, init.clone(), seed)?
        } else {
            joint_train(tasks, &obj, cfg, init.clone(), seed)?
        };
        log::info!("{}: trained, best iteration {}", v.name, trained.best_iteration);
        rows.push(AblationRow {
            variant: *v,
            report: evaluate(v, &obj, &trained)?,
        });
    }
    Ok(AblationTable { seed, rows })
}
