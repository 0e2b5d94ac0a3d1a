use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::shape("metric", format!("{} targets vs {} predictions", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(Error::Empty("metric input"));
    }
    Ok(())
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred)?;
    let sse: f64 = truth.iter().zip(pred).map(|(u, p)| (u - p) * (u - p)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred)?;
    let sae: f64 = truth.iter().zip(pred).map(|(u, p)| (u - p).abs()).sum();
    Ok(sae / truth.len() as f64)
}

/// `1 − SSE/SST`. Undefined (an error) when the targets are constant.
pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sst: f64 = truth.iter().map(|u| (u - mean) * (u - mean)).sum();
    if sst == 0.0 {
        return Err(Error::Invalid("r2 is undefined for constant targets".into()));
    }
    let sse: f64 = truth.iter().zip(pred).map(|(u, p)| (u - p) * (u - p)).sum();
    Ok(1.0 - sse / sst)
}

/// Asymmetric exponential score: early predictions (`pred < true`) cost
/// `e^{(true−pred)/13} − 1`, late ones (`pred ≥ true`) `e^{(pred−true)/10} − 1`.
pub fn nasa_score(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred)?;
    Ok(truth
        .iter()
        .zip(pred)
        .map(|(&u, &p)| {
            if p < u {
                ((u - p) / 13.0).exp() - 1.0
            } else {
                ((p - u) / 10.0).exp() - 1.0
            }
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub score: f64,
    pub n: usize,
    /// `(true, predicted)` per sample.
    pub pairs: Vec<(f64, f64)>,
}

impl MetricsReport {
    pub fn new(truth: &[f64], pred: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(truth, pred)?,
            mae: mae(truth, pred)?,
            r2: r2(truth, pred)?,
            score: nasa_score(truth, pred)?,
            n: truth.len(),
            pairs: truth.iter().copied().zip(pred.iter().copied()).collect(),
        })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        Self::new(&t, &p)
    }

    pub fn truth(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn predicted(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.1).collect()
    }
}
