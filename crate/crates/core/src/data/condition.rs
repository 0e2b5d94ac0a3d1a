use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::cmapss::{UnitRecord, NUM_SETTINGS};
use crate::error::{Error, Result};

/// How operating regimes are discovered from the settings columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionOptions {
    /// Decimal places each setting is rounded to before taking unique
    /// triples.
    pub decimals: [i32; NUM_SETTINGS],
    /// Distance to the nearest centroid beyond which an assignment is
    /// reported as suspicious.
    pub max_distance: f64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        Self {
            decimals: [0, 2, 0],
            max_distance: 1.0,
        }
    }
}

/// Per-regime standardization statistics, fitted on training data only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionModel {
    pub centroids: Vec<[f64; NUM_SETTINGS]>,
    /// `[condition][sensor]`
    pub mean: Vec<Vec<f64>>,
    /// `[condition][sensor]`, population standard deviation. Zero marks a
    /// sensor that is constant within the condition.
    pub std: Vec<Vec<f64>>,
    pub max_distance: f64,
}

fn round_to(x: f64, decimals: i32) -> i64 {
    (x * 10f64.powi(decimals)).round() as i64
}

fn is_constant(std: f64, mean: f64) -> bool {
    std <= 1e-10 * mean.abs().max(1.0)
}

/// Mean and population standard deviation, two-pass.
fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ConditionModel {
    pub fn num_conditions(&self) -> usize {
        self.centroids.len()
    }

    /// Nearest centroid and its Euclidean distance.
    pub fn assign(&self, setting: &[f64; NUM_SETTINGS]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = c.iter().zip(setting).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn fit_stats(centroids: Vec<[f64; NUM_SETTINGS]>, train: &[UnitRecord], max_distance: f64) -> Result<Self> {
        let sensors = train.first().map_or(0, UnitRecord::num_sensors);
        let mut model = Self {
            mean: vec![vec![0.0; sensors]; centroids.len()],
            std: vec![vec![0.0; sensors]; centroids.len()],
            centroids,
            max_distance,
        };
        let mut columns: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); sensors]; model.num_conditions()];
        for u in train {
            for (setting, row) in u.settings.iter().zip(&u.sensors) {
                if row.len() != sensors {
                    return Err(Error::shape("fit_conditions", format!("{} sensors vs {sensors}", row.len())));
                }
                let (c, _) = model.assign(setting);
                for (s, v) in row.iter().enumerate() {
                    columns[c][s].push(*v);
                }
            }
        }
        for (c, cols) in columns.iter().enumerate() {
            for (s, col) in cols.iter().enumerate() {
                if col.is_empty() {
                    continue;
                }
                let (mean, std) = moments(col);
                model.mean[c][s] = mean;
                model.std[c][s] = if is_constant(std, mean) { 0.0 } else { std };
                if model.std[c][s] == 0.0 {
                    log::warn!("sensor {s} is constant in condition {c}; it maps to 0");
                }
            }
        }
        Ok(model)
    }

    /// Standardize records with the statistics of each row's condition.
    pub fn apply(&self, records: &[UnitRecord]) -> Vec<UnitRecord> {
        records
            .iter()
            .map(|u| {
                let sensors = u
                    .settings
                    .iter()
                    .zip(&u.sensors)
                    .map(|(setting, row)| {
                        let (c, dist) = self.assign(setting);
                        if dist > self.max_distance {
                            log::warn!(
                                "unit {}: setting {setting:?} is {dist:.3} from the nearest condition",
                                u.unit
                            );
                        }
                        row.iter()
                            .enumerate()
                            .map(|(s, v)| {
                                let sd = self.std[c][s];
                                if sd == 0.0 {
                                    0.0
                                } else {
                                    (v - self.mean[c][s]) / sd
                                }
                            })
                            .collect()
                    })
                    .collect();
                UnitRecord {
                    sensors,
                    ..u.clone()
                }
            })
            .collect()
    }
}

/// Discover regimes as unique rounded setting triples of the training data
/// and fit per-regime sensor statistics.
pub fn fit_conditions(train: &[UnitRecord], opts: &ConditionOptions) -> Result<ConditionModel> {
    if train.iter().all(UnitRecord::is_empty) {
        return Err(Error::Empty("training records"));
    }
    let keys: BTreeSet<[i64; NUM_SETTINGS]> = train
        .iter()
        .flat_map(|u| u.settings.iter())
        .map(|s| std::array::from_fn(|i| round_to(s[i], opts.decimals[i])))
        .collect();
    let centroids = keys
        .into_iter()
        .map(|k| std::array::from_fn(|i| k[i] as f64 / 10f64.powi(opts.decimals[i])))
        .collect();
    ConditionModel::fit_stats(centroids, train, opts.max_distance)
}

pub fn apply_cs(model: &ConditionModel, records: &[UnitRecord]) -> Vec<UnitRecord> {
    model.apply(records)
}

/// One z-score per sensor from training statistics, ignoring regimes.
pub fn fit_global(train: &[UnitRecord]) -> Result<ConditionModel> {
    if train.iter().all(UnitRecord::is_empty) {
        return Err(Error::Empty("training records"));
    }
    let centroid = train.iter().find(|u| !u.is_empty()).expect("checked").settings[0];
    ConditionModel::fit_stats(vec![centroid], train, f64::INFINITY)
}

pub fn global_standardize(train: &[UnitRecord], records: &[UnitRecord]) -> Result<Vec<UnitRecord>> {
    Ok(fit_global(train)?.apply(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: u32, rows: Vec<([f64; 3], Vec<f64>)>) -> UnitRecord {
        UnitRecord {
            unit: id,
            cycles: (1..=rows.len() as u32).collect(),
            settings: rows.iter().map(|r| r.0).collect(),
            sensors: rows.into_iter().map(|r| r.1).collect(),
        }
    }

    #[test]
    fn two_regimes_are_separated_and_standardized() {
        let rows = (0..40)
            .map(|i| {
                let hi = i % 2 == 1;
                let s = if hi { [20.003, 0.7001, 100.0] } else { [-0.002, 0.0002, 100.0] };
                let base = if hi { 500.0 } else { 10.0 };
                (s, vec![base + (i % 7) as f64, 3.0])
            })
            .collect();
        let train = vec![unit(1, rows)];
        let model = fit_conditions(&train, &ConditionOptions::default()).unwrap();
        assert_eq!(model.num_conditions(), 2);
        let out = apply_cs(&model, &train);
        for c in 0..2 {
            let col: Vec<f64> = out[0]
                .sensors
                .iter()
                .zip(&train[0].settings)
                .filter(|(_, s)| model.assign(s).0 == c)
                .map(|(r, _)| r[0])
                .collect();
            let (m, sd) = moments(&col);
            assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-6);
        }
        assert!(out[0].sensors.iter().all(|r| r[1] == 0.0));
    }

    #[test]
    fn single_regime_matches_global() {
        let rows = (0..30)
            .map(|i| ([0.001 * (i % 3) as f64, 0.0, 100.0], vec![i as f64 * 0.37, (i * i) as f64]))
            .collect();
        let train = vec![unit(1, rows)];
        let cs = apply_cs(&fit_conditions(&train, &ConditionOptions::default()).unwrap(), &train);
        let gs = global_standardize(&train, &train).unwrap();
        assert_eq!(cs, gs);
    }

    #[test]
    fn fit_ignores_other_records() {
        let train = vec![unit(1, vec![([0.0; 3], vec![1.0]), ([0.0; 3], vec![3.0])])];
        let model = fit_conditions(&train, &ConditionOptions::default()).unwrap();
        let test = vec![unit(9, vec![([0.0; 3], vec![100.0])])];
        let out = apply_cs(&model, &test);
        assert_eq!(out[0].sensors[0], vec![(100.0 - 2.0) / 1.0]);
        assert_eq!(model, fit_conditions(&train, &ConditionOptions::default()).unwrap());
    }
}
