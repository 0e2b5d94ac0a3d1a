use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIME_FEATURES: [&str; 12] = [
    "mean",
    "std",
    "rms",
    "max",
    "min",
    "peak_to_peak",
    "kurtosis",
    "skewness",
    "crest_factor",
    "shape_factor",
    "clearance_factor",
    "impulse_factor",
];

pub const SPECTRAL_FEATURES: [&str; 4] = [
    "peak_frequency",
    "total_power",
    "spectral_centroid",
    "spectral_spread",
];

/// Number of octave bands whose power is reported.
pub const NUM_BANDS: usize = 6;

/// Names of the columns produced by [`segment_features`].
pub fn feature_names() -> Vec<String> {
    TIME_FEATURES
        .iter()
        .chain(&SPECTRAL_FEATURES)
        .map(|s| s.to_string())
        .chain((1..=NUM_BANDS).map(|b| format!("band{b}_power")))
        .collect()
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Time-domain statistics in [`TIME_FEATURES`] order. Standard deviation is
/// the population one.
pub fn time_features(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Empty("signal segment"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let peak = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let abs_mean = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let sqrt_mean = x.iter().map(|v| v.abs().sqrt()).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    Ok(vec![
        mean,
        std,
        rms,
        max,
        min,
        max - min,
        safe_div(m4, var * var),
        safe_div(m3, var * std),
        safe_div(peak, rms),
        safe_div(rms, abs_mean),
        safe_div(peak, sqrt_mean * sqrt_mean),
        safe_div(peak, abs_mean),
    ])
}

/// One-sided magnitude spectrum (DC to Nyquist) and its bin frequencies.
pub fn magnitude_spectrum(x: &[f64], sample_rate: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    let mag = buf[..bins].iter().map(|c| c.norm() / n as f64).collect();
    let freq = (0..bins).map(|k| k as f64 * sample_rate / n as f64).collect();
    (freq, mag)
}

/// Spectral statistics in [`SPECTRAL_FEATURES`] order, then band powers.
/// Bands are octaves below Nyquist: the top band covers `[f_N/2, f_N]`,
/// the next `[f_N/4, f_N/2)`, and the last band reaches down to DC.
pub fn spectral_features(x: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::Empty("signal segment"));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::Invalid(format!("sample rate {sample_rate} must be > 0")));
    }
    let (freq, mag) = magnitude_spectrum(x, sample_rate);
    let power: Vec<f64> = mag.iter().map(|m| m * m).collect();
    let total: f64 = power.iter().sum();
    let (peak_bin, _) = mag
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, f64::NEG_INFINITY), |best, (k, &m)| if m > best.1 { (k, m) } else { best });
    let centroid = safe_div(freq.iter().zip(&power).map(|(f, p)| f * p).sum(), total);
    let spread = safe_div(
        freq.iter().zip(&power).map(|(f, p)| (f - centroid).powi(2) * p).sum(),
        total,
    )
    .sqrt();
    let nyquist = sample_rate / 2.0;
    let mut bands = [0.0; NUM_BANDS];
    for (f, p) in freq.iter().zip(&power) {
        let mut b = 0;
        let mut lo = nyquist / 2.0;
        while b + 1 < NUM_BANDS && *f < lo {
            b += 1;
            lo /= 2.0;
        }
        bands[NUM_BANDS - 1 - b] += p;
    }
    let mut out = vec![freq[peak_bin], total, centroid, spread];
    out.extend_from_slice(&bands);
    Ok(out)
}

pub fn segment_features(x: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    let mut f = time_features(x)?;
    f.extend(spectral_features(x, sample_rate)?);
    Ok(f)
}

/// Average the per-segment feature vectors of each hour.
/// `hours[h][s]` is the raw signal of segment `s` in hour `h`.
pub fn extract_vibration_features(hours: &[Vec<Vec<f64>>], sample_rate: f64) -> Result<Vec<Vec<f64>>> {
    hours
        .iter()
        .map(|segments| {
            if segments.is_empty() {
                return Err(Error::Empty("hour group"));
            }
            let mut acc = vec![0.0; TIME_FEATURES.len() + SPECTRAL_FEATURES.len() + NUM_BANDS];
            for s in segments {
                for (a, v) in acc.iter_mut().zip(segment_features(s, sample_rate)?) {
                    *a += v;
                }
            }
            let n = segments.len() as f64;
            Ok(acc.into_iter().map(|a| a / n).collect())
        })
        .collect()
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Indices of the `top_n` columns of `rows` (`[sample][feature]`) with the
/// largest `|r|` against `labels`, ties broken by lower index.
pub fn rank_features_pearson(rows: &[Vec<f64>], labels: &[f64], top_n: usize) -> Result<Vec<usize>> {
    if rows.len() < 2 || rows.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "need at least 2 samples with one label each, got {} rows and {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::Invalid("labels are constant".into()));
    }
    let f = rows[0].len();
    let mut scored: Vec<(usize, f64)> = (0..f)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            (j, pearson(&col, labels).abs())
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(top_n).map(|(j, _)| j).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatingState {
    Active,
    Idle,
    Shutdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskOptions {
    /// RMS below this is a shutdown.
    pub shutdown_rms: f64,
    /// RMS in `[shutdown_rms, idle_rms)` is idling. Equal thresholds
    /// disable idle detection.
    pub idle_rms: f64,
}

impl Default for MaskOptions {
    fn default() -> Self {
        Self {
            shutdown_rms: 0.1,
            idle_rms: 0.1,
        }
    }
}

pub fn classify_rms(rms: &[f64], opts: &MaskOptions) -> Vec<OperatingState> {
    rms.iter()
        .map(|&r| {
            if r < opts.shutdown_rms {
                OperatingState::Shutdown
            } else if r < opts.idle_rms {
                OperatingState::Idle
            } else {
                OperatingState::Active
            }
        })
        .collect()
}

/// Samples kept after removing shutdowns, with relabelled RUL.
#[derive(Clone, Debug, PartialEq)]
pub struct Cleaned {
    /// Indices of the kept samples in the input.
    pub kept: Vec<usize>,
    pub rul: Vec<f64>,
}

/// Drop shutdown samples and recount RUL over operating time only: the
/// label of a kept sample is the final label plus the number of later
/// active samples, so idling holds the label and shutdowns do not count.
pub fn mask_nonoperating(states: &[OperatingState], rul: &[f64]) -> Result<Cleaned> {
    if states.len() != rul.len() {
        return Err(Error::shape(
            "mask_nonoperating",
            format!("{} states vs {} labels", states.len(), rul.len()),
        ));
    }
    let Some(&end) = rul.last() else {
        return Ok(Cleaned {
            kept: Vec::new(),
            rul: Vec::new(),
        });
    };
    let mut kept = Vec::new();
    let mut labels = Vec::new();
    let mut active_after = 0.0;
    for i in (0..states.len()).rev() {
        match states[i] {
            OperatingState::Shutdown => continue,
            state => {
                kept.push(i);
                labels.push(end + active_after);
                if state == OperatingState::Active {
                    active_after += 1.0;
                }
            }
        }
    }
    kept.reverse();
    labels.reverse();
    Ok(Cleaned { kept, rul: labels })
}
