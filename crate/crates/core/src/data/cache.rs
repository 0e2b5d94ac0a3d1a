use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{ConditionModel, SampleWindow, UnitWindows, WindowShape};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// Free-form origin, e.g. `cmapss:FD001` or `synthetic`.
    pub source: String,
    pub window: WindowShape,
    pub time_scale: f64,
    /// Divisor mapping RUL labels to model units.
    pub label_scale: f64,
    pub seed: u64,
    pub normalization: Option<ConditionModel>,
}

/// Windowed dataset as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedDataset {
    pub manifest: Manifest,
    pub train: Vec<UnitWindows>,
    pub test: Vec<UnitWindows>,
}

/// Windows as CSV rows: `unit, run_time, rul, x0 ..`, features row-major.
pub fn write_windows(path: &Path, units: &[UnitWindows], shape: WindowShape) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = shape.time_steps * shape.features;
    let mut header = vec!["unit".to_string(), "run_time".into(), "rul".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for u in units {
        for win in &u.windows {
            if win.features.shape() != [shape.time_steps, shape.features] {
                return Err(Error::shape("cache", format!("window {:?} vs {shape:?}", win.features.shape())));
            }
            let mut rec = vec![u.unit.to_string(), win.run_time.to_string(), win.rul.to_string()];
            rec.extend(win.features.data().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_windows(path: &Path, shape: WindowShape) -> Result<Vec<UnitWindows>> {
    let mut r = csv::Reader::from_path(path)?;
    let n = shape.time_steps * shape.features;
    let mut units: Vec<UnitWindows> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if rec.len() != n + 3 {
            return Err(bad(format!("expected {} fields, found {}", n + 3, rec.len())));
        }
        let unit: u32 = rec[0].parse().map_err(|_| bad(format!("bad unit {:?}", &rec[0])))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        let window = SampleWindow {
            run_time: num(&rec[1])?,
            rul: num(&rec[2])?,
            features: Tensor::new(
                vec![shape.time_steps, shape.features],
                rec.iter().skip(3).map(num).collect::<Result<_>>()?,
            )?,
        };
        match units.last_mut() {
            Some(u) if u.unit == unit => u.windows.push(window),
            _ => units.push(UnitWindows {
                unit,
                windows: vec![window],
            }),
        }
    }
    Ok(units)
}

/// Write the dataset into `dir` (created if needed).
pub fn write_processed(dir: &Path, data: &ProcessedDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_windows(&dir.join(TRAIN_FILE), &data.train, data.manifest.window)?;
    write_windows(&dir.join(TEST_FILE), &data.test, data.manifest.window)?;
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&data.manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn read_processed(dir: &Path) -> Result<ProcessedDataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != CACHE_VERSION {
        return Err(Error::Invalid(format!(
            "{}: cache version {} is not supported (expected {CACHE_VERSION})",
            path.display(),
            manifest.version
        )));
    }
    Ok(ProcessedDataset {
        train: read_windows(&dir.join(TRAIN_FILE), manifest.window)?,
        test: read_windows(&dir.join(TEST_FILE), manifest.window)?,
        manifest,
    })
}

impl Manifest {
    pub fn new(source: impl Into<String>, window: WindowShape, time_scale: f64, label_scale: f64, seed: u64) -> Self {
        Self {
            version: CACHE_VERSION,
            source: source.into(),
            window,
            time_scale,
            label_scale,
            seed,
            normalization: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: u32, n: usize) -> UnitWindows {
        UnitWindows {
            unit: id,
            windows: (0..n)
                .map(|i| SampleWindow {
                    features: Tensor::new(vec![2, 3], (0..6).map(|k| (k as f64 + 0.1) / (i as f64 + 3.0)).collect())
                        .unwrap(),
                    run_time: i as f64 / 7.0,
                    rul: (n - i) as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let data = ProcessedDataset {
            manifest: Manifest::new("test", WindowShape { time_steps: 2, features: 3 }, 7.0, 125.0, 3),
            train: vec![unit(1, 4), unit(5, 2)],
            test: vec![unit(2, 3)],
        };
        write_processed(dir.path(), &data).unwrap();
        assert_eq!(read_processed(dir.path()).unwrap(), data);
    }
}
