//! Checks the second-order expansion of the inner-loop displacement
//! `d = θ^(k) − Φ` under plain SGD:
//!
//! `d ≈ −α Σ_i ḡ_i + α² Σ_i Σ_{j<i} H̄_i ḡ_j`
//!
//! where `ḡ_i` and `H̄_i` are the gradient and Hessian of the `i`-th
//! mini-batch loss at `Φ`.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// `L(θ) = ½ θᵀAθ + bᵀθ + c Σ θ_i⁴`, with `A` symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeLoss {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub quartic: f64,
}

impl ProbeLoss {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let quad: f64 = (0..self.dim())
            .map(|i| theta[i] * dot(&self.a[i], theta))
            .sum();
        0.5 * quad + dot(&self.b, theta) + self.quartic * theta.iter().map(|x| x.powi(4)).sum::<f64>()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| dot(&self.a[i], theta) + self.b[i] + 4.0 * self.quartic * theta[i].powi(3))
            .collect()
    }

    pub fn hessian(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let mut h = self.a.clone();
        for (i, row) in h.iter_mut().enumerate() {
            row[i] += 12.0 * self.quartic * theta[i] * theta[i];
        }
        h
    }

    /// Random well-conditioned loss: `A = MᵀM/n + I`, entries of `M` and `b`
    /// standard normal.
    pub fn random(rng: &mut Rng, n: usize, quartic: f64) -> Self {
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let a = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let s: f64 = (0..n).map(|r| m[r][i] * m[r][j]).sum();
                        s / n as f64 + if i == j { 1.0 } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let b = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        Self { a, b, quartic }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Displacement after one SGD step per mini-batch loss, in order.
pub fn sgd_displacement(phi: &[f64], steps: &[ProbeLoss], alpha: f64) -> Vec<f64> {
    let mut theta = phi.to_vec();
    for loss in steps {
        let g = loss.gradient(&theta);
        for (t, gi) in theta.iter_mut().zip(g) {
            *t -= alpha * gi;
        }
    }
    theta.iter().zip(phi).map(|(t, p)| t - p).collect()
}

/// The two-term expansion of [`sgd_displacement`] around `phi`.
pub fn taylor_displacement(phi: &[f64], steps: &[ProbeLoss], alpha: f64) -> Vec<f64> {
    let grads: Vec<Vec<f64>> = steps.iter().map(|l| l.gradient(phi)).collect();
    let mut d = vec![0.0; phi.len()];
    let mut earlier = vec![0.0; phi.len()];
    for (i, loss) in steps.iter().enumerate() {
        let hg = matvec(&loss.hessian(phi), &earlier);
        for r in 0..d.len() {
            d[r] += -alpha * grads[i][r] + alpha * alpha * hg[r];
        }
        for (e, g) in earlier.iter_mut().zip(&grads[i]) {
            *e += g;
        }
    }
    d
}

/// Residual curve of the expansion over a grid of step sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub alphas: Vec<f64>,
    /// Largest residual norm over the tasks, per step size.
    pub residuals: Vec<f64>,
    /// Least-squares slope of `ln residual` against `ln α`.
    pub slope: f64,
}

/// Each task is a list of per-step mini-batch losses (its length is `k`).
pub fn reptile_taylor_probe(
    tasks: &[Vec<ProbeLoss>],
    phi: &[f64],
    alphas: &[f64],
) -> Result<ProbeReport> {
    if tasks.is_empty() || alphas.is_empty() {
        return Err(Error::Empty("probe grid"));
    }
    if let Some(bad) = tasks.iter().flatten().find(|l| l.dim() != phi.len()) {
        return Err(Error::shape(
            "taylor probe",
            format!("loss of dimension {} vs Φ of {}", bad.dim(), phi.len()),
        ));
    }
    let residuals: Vec<f64> = alphas
        .iter()
        .map(|&alpha| {
            tasks
                .iter()
                .map(|steps| {
                    let d = sgd_displacement(phi, steps, alpha);
                    let t = taylor_displacement(phi, steps, alpha);
                    let diff: Vec<f64> = d.iter().zip(&t).map(|(a, b)| a - b).collect();
                    norm(&diff)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let slope = log_slope(alphas, &residuals);
    Ok(ProbeReport {
        alphas: alphas.to_vec(),
        residuals,
        slope,
    })
}

/// Least-squares slope of `ln y` on `ln x`. NaN if fewer than two usable
/// points.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Geometric grid from `hi` down to `lo` with `n` points.
pub fn geometric_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let r = (lo / hi).ln() / (n - 1) as f64;
    (0..n).map(|i| hi * (r * i as f64).exp()).collect()
}
