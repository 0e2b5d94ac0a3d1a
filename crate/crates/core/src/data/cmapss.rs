use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensors kept for modelling, by 1-based sensor number.
pub const SELECTED_SENSORS: [usize; 14] = [2, 3, 4, 7, 8, 9, 11, 12, 13, 14, 15, 17, 20, 21];

pub const NUM_SETTINGS: usize = 3;
pub const NUM_SENSORS: usize = 21;
const NUM_COLUMNS: usize = 2 + NUM_SETTINGS + NUM_SENSORS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subset {
    FD001,
    FD002,
    FD003,
    FD004,
}

impl Subset {
    pub const ALL: [Subset; 4] = [Subset::FD001, Subset::FD002, Subset::FD003, Subset::FD004];

    pub fn name(self) -> &'static str {
        match self {
            Subset::FD001 => "FD001",
            Subset::FD002 => "FD002",
            Subset::FD003 => "FD003",
            Subset::FD004 => "FD004",
        }
    }

    pub fn train_file(self) -> String {
        format!("train_{}.txt", self.name())
    }

    pub fn test_file(self) -> String {
        format!("test_{}.txt", self.name())
    }

    pub fn rul_file(self) -> String {
        format!("RUL_{}.txt", self.name())
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subset::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown subset {s:?} (expected FD001..FD004)")))
    }
}

/// Cycle-by-cycle record of one engine.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitRecord {
    pub unit: u32,
    pub cycles: Vec<u32>,
    pub settings: Vec<[f64; NUM_SETTINGS]>,
    /// One row per cycle. 21 columns as loaded, fewer after
    /// [`select_sensors`].
    pub sensors: Vec<Vec<f64>>,
}

impl UnitRecord {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmapssSplit {
    pub subset: Subset,
    pub train: Vec<UnitRecord>,
    pub test: Vec<UnitRecord>,
    /// True RUL after the last recorded cycle of each test unit, in test
    /// unit order.
    pub test_rul: Vec<f64>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parse one whitespace-separated trajectory file.
pub fn parse_units(text: &str, path: &Path) -> Result<Vec<UnitRecord>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut units: Vec<UnitRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != NUM_COLUMNS {
            return Err(err(line, format!("expected {NUM_COLUMNS} fields, found {}", fields.len())));
        }
        let mut values = [0.0; NUM_COLUMNS];
        for (v, tok) in values.iter_mut().zip(&fields) {
            *v = tok
                .parse::<f64>()
                .map_err(|_| err(line, format!("non-numeric token {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite value {tok:?}")));
            }
        }
        let as_index = |v: f64, what: &str| {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(err(line, format!("{what} {v} is not a positive integer")))
            }
        };
        let unit = as_index(values[0], "unit id")?;
        let cycle = as_index(values[1], "cycle")?;
        if units.last().map_or(true, |u| u.unit != unit) {
            if units.iter().any(|u| u.unit == unit) {
                return Err(err(line, format!("unit {unit} is not contiguous")));
            }
            units.push(UnitRecord {
                unit,
                cycles: Vec::new(),
                settings: Vec::new(),
                sensors: Vec::new(),
            });
        }
        let u = units.last_mut().expect("pushed above");
        let expected = u.cycles.len() as u32 + 1;
        if cycle != expected {
            return Err(err(line, format!("unit {unit}: cycle {cycle}, expected {expected}")));
        }
        u.cycles.push(cycle);
        u.settings.push([values[2], values[3], values[4]]);
        u.sensors.push(values[5..].to_vec());
    }
    Ok(units)
}

pub fn parse_rul(text: &str, path: &Path) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let tok = l.trim();
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                _ => Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("invalid RUL value {tok:?}"),
                }),
            }
        })
        .collect()
}

/// Load the train, test and RUL files of `subset` from `dir`.
pub fn load_cmapss(dir: &Path, subset: Subset) -> Result<CmapssSplit> {
    let file = |name: String| -> PathBuf { dir.join(name) };
    let train_path = file(subset.train_file());
    let test_path = file(subset.test_file());
    let rul_path = file(subset.rul_file());
    let train = parse_units(&read(&train_path)?, &train_path)?;
    let test = parse_units(&read(&test_path)?, &test_path)?;
    let test_rul = parse_rul(&read(&rul_path)?, &rul_path)?;
    if test_rul.len() != test.len() {
        return Err(Error::Parse {
            path: rul_path,
            line: test_rul.len(),
            msg: format!("{} RUL values for {} test units", test_rul.len(), test.len()),
        });
    }
    Ok(CmapssSplit {
        subset,
        train,
        test,
        test_rul,
    })
}

/// Keep the modelling sensors, in [`SELECTED_SENSORS`] order.
pub fn select_sensors(records: &[UnitRecord]) -> Vec<UnitRecord> {
    records
        .iter()
        .map(|r| UnitRecord {
            sensors: r
                .sensors
                .iter()
                .map(|row| SELECTED_SENSORS.iter().map(|&s| row[s - 1]).collect())
                .collect(),
            ..r.clone()
        })
        .collect()
}

/// Render units back to the whitespace format (full 21-sensor rows).
pub fn format_units(units: &[UnitRecord]) -> String {
    let mut out = String::new();
    for u in units {
        for i in 0..u.len() {
            out.push_str(&format!("{} {}", u.unit, u.cycles[i]));
            for v in u.settings[i].iter().chain(&u.sensors[i]) {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(unit: u32, cycle: u32) -> String {
        let sensors: Vec<String> = (1..=21).map(|s| format!("{}", s as f64 + 0.5)).collect();
        format!("{unit} {cycle} 0.0 0.0 100.0 {}", sensors.join(" "))
    }

    #[test]
    fn parses_units_in_order() {
        let text = [row(1, 1), row(1, 2), row(2, 1)].join("\n");
        let units = parse_units(&text, Path::new("x")).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].cycles, vec![1, 2]);
        assert_eq!(units[0].num_sensors(), 21);
        assert_eq!(units[1].settings[0], [0.0, 0.0, 100.0]);
    }

    #[test]
    fn short_row_names_the_line() {
        let mut bad = row(1, 2);
        bad.truncate(bad.rfind(' ').unwrap());
        let text = [row(1, 1), bad].join("\n");
        let e = parse_units(&text, Path::new("train_FD001.txt")).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("train_FD001.txt:2"), "{msg}");
        assert!(msg.contains("25"), "{msg}");
    }

    #[test]
    fn non_numeric_and_gaps_are_rejected() {
        let text = row(1, 1).replace("100.0", "abc");
        assert!(matches!(parse_units(&text, Path::new("x")), Err(Error::Parse { line: 1, .. })));
        let text = [row(1, 1), row(1, 3)].join("\n");
        assert!(parse_units(&text, Path::new("x")).is_err());
    }

    #[test]
    fn selection_keeps_fourteen_in_order() {
        let units = parse_units(&row(1, 1), Path::new("x")).unwrap();
        let sel = select_sensors(&units);
        let expected: Vec<f64> = SELECTED_SENSORS.iter().map(|&s| s as f64 + 0.5).collect();
        assert_eq!(sel[0].sensors[0], expected);
        assert!(!sel[0].sensors[0].contains(&1.5));
    }

    #[test]
    fn format_round_trips() {
        let text = [row(1, 1), row(1, 2), row(3, 1)].join("\n");
        let units = parse_units(&text, Path::new("x")).unwrap();
        assert_eq!(parse_units(&format_units(&units), Path::new("y")).unwrap(), units);
    }

    #[test]
    fn subset_names() {
        assert_eq!("fd002".parse::<Subset>().unwrap(), Subset::FD002);
        assert!("FD005".parse::<Subset>().is_err());
        assert_eq!(Subset::FD003.rul_file(), "RUL_FD003.txt");
    }
}
