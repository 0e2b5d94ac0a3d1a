use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::SampleWindow;
use crate::error::{Error, Result};
use crate::rng::{self, TAG_SPLIT};

/// Windows of one unit (engine or pump life cycle), in time order.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitWindows {
    pub unit: u32,
    pub windows: Vec<SampleWindow>,
}

/// One adaptation episode.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTask {
    pub id: usize,
    pub unit: u32,
    /// Half-open range of window indices within the unit.
    pub segment: (usize, usize),
    pub support: Vec<SampleWindow>,
    pub query: Vec<SampleWindow>,
}

impl MetaTask {
    pub fn len(&self) -> usize {
        self.support.len() + self.query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Support and query in their original time order.
    pub fn all_windows(&self) -> Vec<SampleWindow> {
        let mut all: Vec<SampleWindow> = self.support.iter().chain(&self.query).cloned().collect();
        all.sort_by(|a, b| a.run_time.total_cmp(&b.run_time));
        all
    }
}

/// How units are cut into tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// One task per unit.
    PerUnit { support_fraction: f64 },
    /// Contiguous segments of `length` windows, one task each.
    Segments { length: usize, support_fraction: f64 },
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec::PerUnit {
            support_fraction: 0.5,
        }
    }
}

impl TaskSpec {
    pub fn support_fraction(&self) -> f64 {
        match *self {
            TaskSpec::PerUnit { support_fraction } | TaskSpec::Segments { support_fraction, .. } => {
                support_fraction
            }
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let f = self.support_fraction();
        if !(f > 0.0 && f < 1.0) {
            out.push(format!("tasks.support_fraction: {f} must lie in (0, 1)"));
        }
        if let TaskSpec::Segments { length, .. } = self {
            if *length < 2 {
                out.push(format!("tasks.length: {length} must be >= 2"));
            }
        }
        out
    }
}

/// Cut units into tasks and split each task into support and query by a
/// seeded random partition. Tasks with fewer than two windows are dropped.
pub fn build_meta_tasks(units: &[UnitWindows], spec: &TaskSpec, seed: u64) -> Result<Vec<MetaTask>> {
    if let Some(p) = spec.problems().first() {
        return Err(Error::Config(p.clone()));
    }
    let fraction = spec.support_fraction();
    let mut tasks = Vec::new();
    for unit in units {
        let n = unit.windows.len();
        let segments: Vec<(usize, usize)> = match *spec {
            TaskSpec::PerUnit { .. } => vec![(0, n)],
            TaskSpec::Segments { length, .. } => (0..n)
                .step_by(length)
                .map(|s| (s, (s + length).min(n)))
                .collect(),
        };
        for (start, end) in segments {
            let len = end - start;
            if len < 2 {
                log::warn!("unit {}: segment {start}..{end} has {len} window(s), dropped", unit.unit);
                continue;
            }
            let mut rng = rng::stream(seed, &[TAG_SPLIT, unit.unit as u64, start as u64]);
            let mut idx: Vec<usize> = (start..end).collect();
            idx.shuffle(&mut rng);
            let n_support = ((len as f64 * fraction).round() as usize).clamp(1, len - 1);
            let (s, q) = idx.split_at(n_support);
            let mut s = s.to_vec();
            let mut q = q.to_vec();
            s.sort_unstable();
            q.sort_unstable();
            tasks.push(MetaTask {
                id: tasks.len(),
                unit: unit.unit,
                segment: (start, end),
                support: s.iter().map(|&i| unit.windows[i].clone()).collect(),
                query: q.iter().map(|&i| unit.windows[i].clone()).collect(),
            });
        }
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn unit(id: u32, n: usize) -> UnitWindows {
        UnitWindows {
            unit: id,
            windows: (0..n)
                .map(|i| SampleWindow {
                    features: Tensor::full(vec![2, 1], i as f64),
                    run_time: i as f64,
                    rul: (n - i) as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn per_unit_split_conserves_and_separates() {
        let units = vec![unit(1, 10), unit(2, 7), unit(3, 1)];
        let tasks = build_meta_tasks(&units, &TaskSpec::default(), 3).unwrap();
        assert_eq!(tasks.len(), 2);
        let total: usize = tasks.iter().map(MetaTask::len).sum();
        assert_eq!(total, 17);
        for t in &tasks {
            assert!(!t.support.is_empty() && !t.query.is_empty());
            for s in &t.support {
                assert!(!t.query.iter().any(|q| q.run_time == s.run_time));
            }
        }
        assert_eq!(tasks[0].support.len(), 5);
    }

    #[test]
    fn splits_are_seeded() {
        let units = vec![unit(1, 30)];
        let a = build_meta_tasks(&units, &TaskSpec::default(), 5).unwrap();
        let b = build_meta_tasks(&units, &TaskSpec::default(), 5).unwrap();
        let c = build_meta_tasks(&units, &TaskSpec::default(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn segments_are_contiguous() {
        let spec = TaskSpec::Segments {
            length: 4,
            support_fraction: 0.5,
        };
        let tasks = build_meta_tasks(&[unit(1, 9)], &spec, 0).unwrap();
        let bounds: Vec<_> = tasks.iter().map(|t| t.segment).collect();
        assert_eq!(bounds, vec![(0, 4), (4, 8)]);
        assert_eq!(tasks[1].all_windows()[0].run_time, 4.0);
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let spec = TaskSpec::PerUnit {
            support_fraction: 1.0,
        };
        assert!(build_meta_tasks(&[unit(1, 4)], &spec, 0).is_err());
    }
}
