use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::ParameterSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one optimization run.
///
/// The update divides by `sqrt(v̂ + ε)`, with ε inside the root.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: ParameterSet,
    pub v: ParameterSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, like: &ParameterSet) -> Self {
        Self {
            config,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        params.check_aligned(grads)?;
        params.check_aligned(&self.m)?;
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let i = self.step as i32;
        let c1 = 1.0 - beta1.powi(i);
        let c2 = 1.0 - beta2.powi(i);

        let moments = self.m.iter_mut().zip(self.v.iter_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in
            params.iter_mut().zip(grads.iter()).zip(moments)
        {
            let p = p.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (j, &gj) in g.data().iter().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat + eps).sqrt();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn scalar_set(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("theta", Tensor::vector(vec![v]));
        p
    }

    fn one_step(g: f64) -> f64 {
        let mut p = scalar_set(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        s.step(&mut p, &scalar_set(g)).unwrap();
        p.get("theta").unwrap().data()[0]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        assert_eq!(one_step(0.0), 0.0);
    }

    #[test]
    fn first_step_hand_trace() {
        // m̂ = 2, v̂ = 4  =>  Δ = -0.001 · 2 / sqrt(4 + 1e-8)
        let expected = -0.001 * 2.0 / (4.0f64 + 1e-8).sqrt();
        assert!((one_step(2.0) - expected).abs() < 1e-18);
        assert!((one_step(2.0) + 0.001).abs() < 1e-9);
        assert!((one_step(-2.0) - 0.001).abs() < 1e-9);
    }

    #[test]
    fn opposite_gradients_give_opposite_steps() {
        for g in [0.3, 1.7, 1e-4, 25.0] {
            assert_eq!(one_step(g), -one_step(-g));
        }
    }

    #[test]
    fn misaligned_gradients_are_rejected() {
        let mut p = scalar_set(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        let mut g = ParameterSet::new();
        g.insert("other", Tensor::vector(vec![1.0]));
        assert!(s.step(&mut p, &g).is_err());
    }
}
