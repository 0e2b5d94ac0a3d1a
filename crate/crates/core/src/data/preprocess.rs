use crate::autodiff::Tensor;
use crate::data::{SampleWindow, UnitWindows};
use crate::error::{Error, Result};

/// `s'_t = ρ s_t + (1 − ρ) s'_{t−1}`, starting from `s'_1 = s_1`.
pub fn ewma(series: &[f64], rho: f64) -> Result<Vec<f64>> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Invalid(format!("ewma factor {rho} must lie in (0, 1]")));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut prev = None;
    for &s in series {
        let v = match prev {
            None => s,
            Some(p) => rho * s + (1.0 - rho) * p,
        };
        out.push(v);
        prev = Some(v);
    }
    Ok(out)
}

/// Smooth every column of a row-major `[time][feature]` matrix.
pub fn ewma_columns(rows: &[Vec<f64>], rho: f64) -> Result<Vec<Vec<f64>>> {
    let cols = rows.first().map_or(0, Vec::len);
    let mut out = rows.to_vec();
    for c in 0..cols {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        for (r, v) in out.iter_mut().zip(ewma(&col, rho)?) {
            r[c] = v;
        }
    }
    Ok(out)
}

pub fn cap_rul(u: f64, cap: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Invalid(format!("RUL {u} is negative")));
    }
    Ok(u.min(cap))
}

/// A unit's preprocessed series: one feature row, cycle and label per step.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitSeries {
    pub unit: u32,
    pub cycles: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub rul: Vec<f64>,
}

impl UnitSeries {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }
}

/// Stride-1 windows of length `w`. The window ending at step `c` carries
/// `run_time = cycle_c / time_scale` and the label at `c`. Units shorter
/// than `w` yield no windows and a warning.
pub fn sliding_windows(series: &UnitSeries, w: usize, time_scale: f64) -> Result<UnitWindows> {
    if w == 0 {
        return Err(Error::Invalid("window length must be >= 1".into()));
    }
    if !(time_scale > 0.0) {
        return Err(Error::Invalid(format!("time scale {time_scale} must be > 0")));
    }
    let n = series.len();
    if n < w {
        log::warn!("unit {}: {n} steps is shorter than the window ({w}); skipped", series.unit);
        return Ok(UnitWindows {
            unit: series.unit,
            windows: Vec::new(),
        });
    }
    let f = series.features.first().map_or(0, Vec::len);
    let windows = (w - 1..n)
        .map(|end| {
            let data: Vec<f64> = series.features[end + 1 - w..=end]
                .iter()
                .flat_map(|r| r.iter().copied())
                .collect();
            Ok(SampleWindow {
                features: Tensor::new(vec![w, f], data)?,
                run_time: series.cycles[end] / time_scale,
                rul: series.rul[end],
            })
        })
        .collect::<Result<_>>()?;
    Ok(UnitWindows {
        unit: series.unit,
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize) -> UnitSeries {
        UnitSeries {
            unit: 4,
            cycles: (1..=n).map(|c| c as f64).collect(),
            features: (0..n).map(|i| vec![i as f64, -(i as f64)]).collect(),
            rul: (0..n).map(|i| (n - 1 - i) as f64).collect(),
        }
    }

    #[test]
    fn ewma_examples() {
        assert_eq!(ewma(&[0.0, 1.0], 0.5).unwrap(), vec![0.0, 0.5]);
        let s = [1.0, -2.0, 7.5];
        assert_eq!(ewma(&s, 1.0).unwrap(), s.to_vec());
        assert!(ewma(&[3.0; 10], 0.1).unwrap().iter().all(|&v| (v - 3.0).abs() < 1e-15));
        assert!(ewma(&s, 0.0).is_err());
        assert!(ewma(&s, 1.5).is_err());
    }

    #[test]
    fn ewma_shift_equivariant() {
        let s = [0.3, 1.9, -0.4, 2.2, 5.0];
        let shifted: Vec<f64> = s.iter().map(|v| v + 10.0).collect();
        let a = ewma(&s, 0.3).unwrap();
        let b = ewma(&shifted, 0.3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x + 10.0 - y).abs() < 1e-12);
        }
    }

    #[test]
    fn capping() {
        assert_eq!(cap_rul(130.0, 125.0).unwrap(), 125.0);
        assert_eq!(cap_rul(125.0, 125.0).unwrap(), 125.0);
        assert_eq!(cap_rul(60.0, 125.0).unwrap(), 60.0);
        assert!(cap_rul(-1.0, 125.0).is_err());
    }

    #[test]
    fn window_counts() {
        assert_eq!(sliding_windows(&series(15), 15, 1.0).unwrap().windows.len(), 1);
        assert_eq!(sliding_windows(&series(20), 15, 1.0).unwrap().windows.len(), 6);
        assert!(sliding_windows(&series(14), 15, 1.0).unwrap().windows.is_empty());
    }

    #[test]
    fn window_contents() {
        let w = sliding_windows(&series(6), 3, 10.0).unwrap();
        let last = w.windows.last().unwrap();
        assert_eq!(last.features.shape(), &[3, 2]);
        assert_eq!(last.features.data(), &[3.0, -3.0, 4.0, -4.0, 5.0, -5.0]);
        assert_eq!(last.run_time, 0.6);
        assert_eq!(last.rul, 0.0);
        assert_eq!(w.windows[0].rul, 3.0);
    }
}
