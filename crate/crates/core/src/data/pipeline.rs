use serde::{Deserialize, Serialize};

use crate::data::cmapss::{select_sensors, CmapssSplit, Subset, UnitRecord};
use crate::data::condition::{fit_conditions, fit_global, ConditionModel, ConditionOptions};
use crate::data::preprocess::{cap_rul, ewma_columns, sliding_windows, UnitSeries};
use crate::data::UnitWindows;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// Per operating condition.
    #[default]
    Condition,
    /// One set of statistics for all data.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmapssOptions {
    pub window: usize,
    pub rul_cap: f64,
    pub ewma_rho: f64,
    pub standardization: Standardization,
    pub conditions: ConditionOptions,
    /// Use only the first `n` training units.
    pub train_units: Option<usize>,
}

impl Default for CmapssOptions {
    fn default() -> Self {
        Self {
            window: 15,
            rul_cap: 125.0,
            ewma_rho: 0.1,
            standardization: Standardization::Condition,
            conditions: ConditionOptions::default(),
            train_units: None,
        }
    }
}

impl CmapssOptions {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.window == 0 {
            out.push("data.window: must be >= 1".to_string());
        }
        if !(self.rul_cap > 0.0) {
            out.push(format!("data.rul_cap: {} must be > 0", self.rul_cap));
        }
        if !(self.ewma_rho > 0.0 && self.ewma_rho <= 1.0) {
            out.push(format!("data.ewma_rho: {} must lie in (0, 1]", self.ewma_rho));
        }
        if self.train_units == Some(0) {
            out.push("data.train_units: must be >= 1".to_string());
        }
        out
    }
}

/// Windows ready for training and last-point evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedCmapss {
    pub subset: Subset,
    pub train: Vec<UnitWindows>,
    /// Usable test units (at least one full window).
    pub test: Vec<UnitWindows>,
    /// Capped true RUL at the last cycle of each usable test unit.
    pub test_rul: Vec<f64>,
    /// Test units dropped for being shorter than the window.
    pub skipped_test: Vec<u32>,
    pub model: ConditionModel,
    /// Divisor mapping cycles to run time: the longest training life.
    pub time_scale: f64,
}

fn to_series(
    records: &[UnitRecord],
    final_rul: impl Fn(usize) -> f64,
    cap: f64,
    rho: f64,
) -> Result<Vec<UnitSeries>> {
    records
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let last = *u.cycles.last().ok_or(Error::Empty("unit record"))? as f64;
            let end = final_rul(i);
            let rul = u
                .cycles
                .iter()
                .map(|&c| cap_rul(end + last - c as f64, cap))
                .collect::<Result<_>>()?;
            Ok(UnitSeries {
                unit: u.unit,
                cycles: u.cycles.iter().map(|&c| c as f64).collect(),
                features: ewma_columns(&u.sensors, rho)?,
                rul,
            })
        })
        .collect()
}

/// Sensor selection, standardization fitted on the training units, EWMA
/// smoothing, capped labels and stride-1 windows.
pub fn prepare_cmapss(split: &CmapssSplit, opts: &CmapssOptions) -> Result<PreparedCmapss> {
    if let Some(p) = opts.problems().first() {
        return Err(Error::Config(p.clone()));
    }
    let n_train = opts.train_units.unwrap_or(split.train.len()).min(split.train.len());
    let train = select_sensors(&split.train[..n_train]);
    let test = select_sensors(&split.test);
    let model = match opts.standardization {
        Standardization::Condition => fit_conditions(&train, &opts.conditions)?,
        Standardization::Global => fit_global(&train)?,
    };
    let train = model.apply(&train);
    let test = model.apply(&test);
    let time_scale = train.iter().map(UnitRecord::len).max().ok_or(Error::Empty("training units"))? as f64;

    let train_series = to_series(&train, |_| 0.0, opts.rul_cap, opts.ewma_rho)?;
    let test_series = to_series(&test, |i| split.test_rul[i], opts.rul_cap, opts.ewma_rho)?;

    let train = train_series
        .iter()
        .map(|s| sliding_windows(s, opts.window, time_scale))
        .collect::<Result<Vec<_>>>()?;
    let mut usable = Vec::new();
    let mut test_rul = Vec::new();
    let mut skipped_test = Vec::new();
    for s in &test_series {
        let w = sliding_windows(s, opts.window, time_scale)?;
        if w.windows.is_empty() {
            skipped_test.push(s.unit);
        } else {
            test_rul.push(*s.rul.last().expect("non-empty"));
            usable.push(w);
        }
    }
    Ok(PreparedCmapss {
        subset: split.subset,
        train,
        test: usable,
        test_rul,
        skipped_test,
        model,
        time_scale,
    })
}
