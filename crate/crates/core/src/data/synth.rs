use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::cmapss::{format_units, CmapssSplit, Subset, UnitRecord, NUM_SENSORS};
use crate::data::preprocess::{sliding_windows, UnitSeries};
use crate::data::UnitWindows;
use crate::error::{Error, Result};
use crate::rng::{self, Rng, TAG_SYNTH};

/// Fleet of run-to-failure units driven by a hidden degradation state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSpec {
    pub units: usize,
    pub min_life: usize,
    pub max_life: usize,
    pub features: usize,
    /// Standard deviation of additive measurement noise.
    pub noise: f64,
    /// Relative spread of the unit-specific feature mappings.
    pub drift: f64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            units: 20,
            min_life: 160,
            max_life: 220,
            features: 15,
            noise: 0.02,
            drift: 0.15,
        }
    }
}

impl FleetSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.units == 0 {
            out.push("fleet.units: must be >= 1".into());
        }
        if self.min_life < 2 || self.min_life > self.max_life {
            out.push(format!(
                "fleet.min_life: need 2 <= min_life <= max_life, got {} and {}",
                self.min_life, self.max_life
            ));
        }
        if self.features == 0 {
            out.push("fleet.features: must be >= 1".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            out.push(format!("fleet.noise: {} must be finite and >= 0", self.noise));
        }
        if !(self.drift >= 0.0 && self.drift.is_finite()) {
            out.push(format!("fleet.drift: {} must be finite and >= 0", self.drift));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticUnit {
    pub unit: u32,
    /// Hidden degradation in `[0, 1]`, non-decreasing.
    pub latent: Vec<f64>,
    /// `[step][feature]`
    pub features: Vec<Vec<f64>>,
    pub rul: Vec<f64>,
}

impl SyntheticUnit {
    pub fn life(&self) -> usize {
        self.latent.len()
    }
}

/// Smooth monotone response shapes, cycled over the features.
fn response(kind: usize, d: f64) -> f64 {
    match kind % 5 {
        0 => d,
        1 => d * d,
        2 => (2.0 * d).tanh(),
        3 => d.exp() - 1.0,
        _ => d.sqrt(),
    }
}

/// Generate `spec.units` units. Unit `i` draws only from its own random
/// stream, so adding units never changes earlier ones.
pub fn synthesize_degradation_fleet(spec: &FleetSpec, seed: u64) -> Result<Vec<SyntheticUnit>> {
    if let Some(p) = spec.problems().first() {
        return Err(Error::Config(p.clone()));
    }
    let mut shared = rng::stream(seed, &[TAG_SYNTH]);
    let base_gain: Vec<f64> = (0..spec.features)
        .map(|j| {
            let sign = if j % 3 == 2 { -1.0 } else { 1.0 };
            sign * shared.gen_range(0.5..1.5)
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid");
    (0..spec.units)
        .map(|i| {
            let mut r = rng::stream(seed, &[TAG_SYNTH, i as u64 + 1]);
            let life = r.gen_range(spec.min_life..=spec.max_life);
            let shape = r.gen_range(1.4..1.8);
            let gain: Vec<f64> = base_gain
                .iter()
                .map(|g| g * (1.0 + spec.drift * r.sample::<f64, _>(StandardNormal)))
                .collect();
            let offset: Vec<f64> = (0..spec.features)
                .map(|_| spec.drift * r.sample::<f64, _>(StandardNormal))
                .collect();
            let latent: Vec<f64> = (0..life)
                .map(|t| (t as f64 / (life - 1) as f64).powf(shape))
                .collect();
            let features = latent
                .iter()
                .map(|&d| {
                    (0..spec.features)
                        .map(|j| {
                            let clean = gain[j] * response(j, d) + offset[j];
                            if spec.noise > 0.0 {
                                clean + noise.sample(&mut r)
                            } else {
                                clean
                            }
                        })
                        .collect()
                })
                .collect();
            Ok(SyntheticUnit {
                unit: i as u32 + 1,
                latent,
                features,
                rul: (0..life).map(|t| (life - 1 - t) as f64).collect(),
            })
        })
        .collect()
}

/// Stride-1 windows over each unit; run time is the step count divided by
/// `time_scale`.
pub fn fleet_windows(units: &[SyntheticUnit], window: usize, time_scale: f64) -> Result<Vec<UnitWindows>> {
    units
        .iter()
        .map(|u| {
            let series = UnitSeries {
                unit: u.unit,
                cycles: (1..=u.life()).map(|c| c as f64).collect(),
                features: u.features.clone(),
                rul: u.rul.clone(),
            };
            sliding_windows(&series, window, time_scale)
        })
        .collect()
}

/// Parameters of a C-MAPSS-format fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct CmapssFixture {
    pub subset: Subset,
    /// Operating settings of each regime.
    pub regimes: Vec<[f64; 3]>,
    pub train_units: usize,
    pub test_units: usize,
    pub min_life: usize,
    pub max_life: usize,
}

impl CmapssFixture {
    pub fn single_condition(subset: Subset) -> Self {
        Self {
            subset,
            regimes: vec![[0.0, 0.0, 100.0]],
            train_units: 12,
            test_units: 6,
            min_life: 60,
            max_life: 120,
        }
    }

    pub fn six_conditions(subset: Subset) -> Self {
        Self {
            regimes: vec![
                [0.0, 0.0, 100.0],
                [10.0, 0.25, 100.0],
                [20.0, 0.7, 100.0],
                [25.0, 0.62, 60.0],
                [35.0, 0.84, 100.0],
                [42.0, 0.84, 100.0],
            ],
            ..Self::single_condition(subset)
        }
    }
}

fn fixture_unit(r: &mut Rng, unit: u32, life: usize, regimes: &[[f64; 3]], gains: &[f64]) -> UnitRecord {
    let mut settings = Vec::with_capacity(life);
    let mut sensors = Vec::with_capacity(life);
    for c in 0..life {
        let k = r.gen_range(0..regimes.len());
        let base = regimes[k];
        let jitter = [0.004, 0.0004, 0.0];
        let setting: [f64; 3] = std::array::from_fn(|i| base[i] + jitter[i] * (2.0 * r.gen::<f64>() - 1.0));
        let d = (c as f64 / life as f64).powi(2);
        let row = (0..NUM_SENSORS)
            .map(|s| {
                let regime_level = 100.0 + 10.0 * s as f64 + 7.0 * k as f64 * (1.0 + s as f64 / 7.0);
                if gains[s] == 0.0 {
                    regime_level
                } else {
                    regime_level + gains[s] * d + 0.05 * r.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        settings.push(setting);
        sensors.push(row);
    }
    UnitRecord {
        unit,
        cycles: (1..=life as u32).collect(),
        settings,
        sensors,
    }
}

/// Generate a run-to-failure training set and truncated test set in the
/// C-MAPSS layout. Sensors 1, 5, 10, 16, 18 and 19 are flat.
pub fn synthetic_cmapss(fx: &CmapssFixture, seed: u64) -> CmapssSplit {
    let mut r = rng::stream(seed, &[TAG_SYNTH, u64::MAX]);
    let flat = [1, 5, 10, 16, 18, 19];
    let gains: Vec<f64> = (1..=NUM_SENSORS)
        .map(|s| if flat.contains(&s) { 0.0 } else { r.gen_range(-2.0..2.0) })
        .collect();
    let train = (1..=fx.train_units as u32)
        .map(|u| {
            let life = r.gen_range(fx.min_life..=fx.max_life);
            fixture_unit(&mut r, u, life, &fx.regimes, &gains)
        })
        .collect();
    let mut test = Vec::new();
    let mut test_rul = Vec::new();
    for u in 1..=fx.test_units as u32 {
        let life = r.gen_range(fx.min_life..=fx.max_life);
        let full = fixture_unit(&mut r, u, life, &fx.regimes, &gains);
        let keep = r.gen_range(life / 3..life);
        test.push(UnitRecord {
            unit: u,
            cycles: full.cycles[..keep].to_vec(),
            settings: full.settings[..keep].to_vec(),
            sensors: full.sensors[..keep].to_vec(),
        });
        test_rul.push((life - keep) as f64);
    }
    CmapssSplit {
        subset: fx.subset,
        train,
        test,
        test_rul,
    }
}

/// Write a split as `train_*.txt`, `test_*.txt` and `RUL_*.txt` in `dir`.
pub fn write_cmapss(dir: &Path, split: &CmapssSplit) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let s = split.subset;
    let write = |name: String, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write(s.train_file(), format_units(&split.train))?;
    write(s.test_file(), format_units(&split.test))?;
    let rul: String = split.test_rul.iter().map(|v| format!("{v}\n")).collect();
    write(s.rul_file(), rul)
}
