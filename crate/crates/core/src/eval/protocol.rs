use rand::seq::index;
use rayon::prelude::*;

use crate::data::{Batch, SampleWindow, UnitWindows};
use crate::error::{Error, Result};
use crate::eval::metrics::MetricsReport;
use crate::meta::{few_shot_adapt, InnerLoop, Objective};
use crate::nn::ParameterSet;
use crate::rng::{self, TAG_ADAPT};

const PREDICT_CHUNK: usize = 256;

/// Eval-mode predictions in original units.
pub fn predict_windows(objective: &Objective, params: &ParameterSet, windows: &[SampleWindow]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(PREDICT_CHUNK) {
        out.extend(objective.predict(params, &Batch::new(chunk)?)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LastPointEval {
    pub report: MetricsReport,
    /// Units without a full window, excluded from the report.
    pub skipped: Vec<u32>,
}

/// One prediction per test unit from its final window, scored against
/// `true_rul` (aligned with `units`) capped at `cap`.
pub fn evaluate_cmapss_last_point(
    objective: &Objective,
    params: &ParameterSet,
    units: &[UnitWindows],
    true_rul: &[f64],
    cap: f64,
) -> Result<LastPointEval> {
    if units.len() != true_rul.len() {
        return Err(Error::shape("last-point evaluation", format!("{} units vs {} labels", units.len(), true_rul.len())));
    }
    let mut windows = Vec::new();
    let mut truth = Vec::new();
    let mut skipped = Vec::new();
    for (u, &t) in units.iter().zip(true_rul) {
        match u.windows.last() {
            Some(w) => {
                windows.push(w.clone());
                truth.push(t.min(cap));
            }
            None => {
                log::warn!("test unit {} has no full window; excluded", u.unit);
                skipped.push(u.unit);
            }
        }
    }
    let pred = predict_windows(objective, params, &windows)?;
    Ok(LastPointEval {
        report: MetricsReport::new(&truth, &pred)?,
        skipped,
    })
}

/// Constant prediction of the mean training label, scored like
/// [`evaluate_cmapss_last_point`].
pub fn mean_baseline(train: &[UnitWindows], true_rul: &[f64], cap: f64) -> Result<MetricsReport> {
    let labels: Vec<f64> = train.iter().flat_map(|u| u.windows.iter().map(|w| w.rul)).collect();
    if labels.is_empty() {
        return Err(Error::Empty("training labels"));
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let truth: Vec<f64> = true_rul.iter().map(|t| t.min(cap)).collect();
    MetricsReport::new(&truth, &vec![mean; truth.len()])
}

/// Support/query split of one evaluation unit.
pub fn support_query(unit: &UnitWindows, shots: usize, seed: u64) -> Result<(Vec<SampleWindow>, Vec<SampleWindow>)> {
    let n = unit.windows.len();
    if shots >= n {
        return Err(Error::Invalid(format!(
            "unit {} has {n} windows, cannot hold out {shots} support samples and keep a query set",
            unit.unit
        )));
    }
    let mut r = rng::stream(seed, &[TAG_ADAPT, unit.unit as u64, shots as u64]);
    let mut picked = index::sample(&mut r, n, shots).into_vec();
    picked.sort_unstable();
    let mut support = Vec::with_capacity(shots);
    let mut query = Vec::with_capacity(n - shots);
    let mut next = picked.iter().peekable();
    for (i, w) in unit.windows.iter().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
            support.push(w.clone());
        } else {
            query.push(w.clone());
        }
    }
    Ok((support, query))
}

/// `shots` windows drawn without replacement from a support file's pool.
pub fn draw_support(pool: &[SampleWindow], shots: usize, seed: u64) -> Result<Vec<SampleWindow>> {
    if shots > pool.len() {
        return Err(Error::Invalid(format!(
            "{shots} shots requested but the support set holds {} windows",
            pool.len()
        )));
    }
    let mut r = rng::stream(seed, &[TAG_ADAPT, u64::MAX, shots as u64]);
    let mut picked = index::sample(&mut r, pool.len(), shots).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitEval {
    pub unit: u32,
    pub zero_shot: MetricsReport,
    pub adapted: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FewShotEval {
    pub shots: usize,
    pub units: Vec<UnitEval>,
    /// All query pairs of all units.
    pub zero_shot: MetricsReport,
    pub adapted: MetricsReport,
}

impl FewShotEval {
    /// Units whose adapted RMSE is strictly below their 0-shot RMSE.
    pub fn improved_units(&self) -> usize {
        self.units.iter().filter(|u| u.adapted.rmse < u.zero_shot.rmse).count()
    }
}

/// For each unit: draw `shots` support windows, adapt `phi` on them and
/// score both `phi` and the adapted parameters on the remaining windows.
pub fn evaluate_few_shot(
    objective: &Objective,
    phi: &ParameterSet,
    units: &[UnitWindows],
    shots: usize,
    adapt: &InnerLoop,
    seed: u64,
) -> Result<FewShotEval> {
    if units.is_empty() {
        return Err(Error::Empty("evaluation units"));
    }
    let per_unit: Vec<UnitEval> = units
        .par_iter()
        .map(|u| {
            let (support, query) = support_query(u, shots, seed)?;
            let mut r = rng::stream(seed, &[TAG_ADAPT, u.unit as u64, shots as u64, 1]);
            let theta = few_shot_adapt(phi, &support, objective, adapt, &mut r)?;
            let truth: Vec<f64> = query.iter().map(|w| w.rul).collect();
            Ok(UnitEval {
                unit: u.unit,
                zero_shot: MetricsReport::new(&truth, &predict_windows(objective, phi, &query)?)?,
                adapted: MetricsReport::new(&truth, &predict_windows(objective, &theta, &query)?)?,
            })
        })
        .collect::<Result<_>>()?;
    let pool = |pick: fn(&UnitEval) -> &MetricsReport| -> Result<MetricsReport> {
        let pairs: Vec<(f64, f64)> = per_unit.iter().flat_map(|u| pick(u).pairs.iter().copied()).collect();
        MetricsReport::from_pairs(&pairs)
    };
    Ok(FewShotEval {
        shots,
        zero_shot: pool(|u| &u.zero_shot)?,
        adapted: pool(|u| &u.adapted)?,
        units: per_unit,
    })
}
