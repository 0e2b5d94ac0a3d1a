use rand::seq::index;
use rand::Rng as _;

use crate::data::{Batch, SampleWindow};
use crate::error::{Error, Result};
use crate::meta::adam::{AdamConfig, AdamState};
use crate::meta::loss::{LossValues, Objective};
use crate::nn::ParameterSet;
use crate::rng::Rng;

/// Settings of one inner optimization run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerLoop {
    pub adam: AdamConfig,
    pub steps: usize,
    pub batch_size: usize,
}

/// Run `steps` Adam updates from a copy of `start`. `grad_fn` receives the
/// current parameters and the step index and returns `(loss, gradient)`.
/// Returns the final parameters and the per-step losses.
pub fn adam_descent<F>(
    start: &ParameterSet,
    adam: AdamConfig,
    steps: usize,
    mut grad_fn: F,
) -> Result<(ParameterSet, Vec<f64>)>
where
    F: FnMut(&ParameterSet, usize) -> Result<(f64, ParameterSet)>,
{
    let mut theta = start.clone();
    let mut state = AdamState::new(adam, &theta);
    let mut losses = Vec::with_capacity(steps);
    for i in 0..steps {
        let (loss, grads) = grad_fn(&theta, i)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: "inner loss" });
        }
        losses.push(loss);
        state.step(&mut theta, &grads)?;
    }
    Ok((theta, losses))
}

/// Mini-batch indices: a subset without replacement when the data is large
/// enough, otherwise `batch_size` draws with replacement.
pub fn sample_indices(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<usize> {
    if n >= batch_size {
        let mut idx = index::sample(rng, n, batch_size).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..batch_size).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// Outcome of adapting to one task.
#[derive(Clone, Debug)]
pub struct Adapted {
    pub params: ParameterSet,
    pub losses: Vec<LossValues>,
}

/// `k` Adam steps on mini-batches of `data`, starting from a copy of `phi`.
/// `phi` itself is never modified.
pub fn inner_adapt(
    phi: &ParameterSet,
    data: &[SampleWindow],
    objective: &Objective,
    inner: &InnerLoop,
    rng: &mut Rng,
) -> Result<Adapted> {
    if data.is_empty() {
        return Err(Error::Empty("task training data"));
    }
    let mut losses = Vec::with_capacity(inner.steps);
    let (params, _) = adam_descent(phi, inner.adam, inner.steps, |theta, _| {
        let idx = sample_indices(data.len(), inner.batch_size, rng);
        let batch = Batch::new(idx.iter().map(|&i| &data[i]))?;
        let (values, grads) = objective.loss_and_grad(theta, &batch, Some(&mut *rng))?;
        losses.push(values);
        Ok((values.total, grads))
    })?;
    Ok(Adapted { params, losses })
}

/// Adapt meta-parameters to a new task from its support set. An empty
/// support set is the 0-shot case and returns `phi` unchanged.
pub fn few_shot_adapt(
    phi: &ParameterSet,
    support: &[SampleWindow],
    objective: &Objective,
    inner: &InnerLoop,
    rng: &mut Rng,
) -> Result<ParameterSet> {
    if support.is_empty() {
        return Ok(phi.clone());
    }
    Ok(inner_adapt(phi, support, objective, inner, rng)?.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::rng;

    fn scalar(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("theta", Tensor::vector(vec![v]));
        p
    }

    fn quadratic(theta: &ParameterSet) -> (f64, ParameterSet) {
        let x = theta.get("theta").unwrap().data()[0];
        (x * x, scalar(2.0 * x))
    }

    #[test]
    fn zero_steps_is_identity() {
        let phi = scalar(1.0);
        let (theta, losses) =
            adam_descent(&phi, AdamConfig::default(), 0, |t, _| Ok(quadratic(t))).unwrap();
        assert_eq!(theta, phi);
        assert!(losses.is_empty());
    }

    #[test]
    fn flat_landscape_is_identity() {
        let phi = scalar(0.7);
        let (theta, _) = adam_descent(&phi, AdamConfig::default(), 10, |_, _| {
            Ok((3.0, scalar(0.0)))
        })
        .unwrap();
        assert_eq!(theta, phi);
    }

    #[test]
    fn one_step_on_quadratic() {
        // g = 2 at θ = 1, so one Adam step moves by ≈ -α
        let (theta, _) =
            adam_descent(&scalar(1.0), AdamConfig::default(), 1, |t, _| Ok(quadratic(t)))
                .unwrap();
        let x = theta.get("theta").unwrap().data()[0];
        assert!((x - 0.999).abs() < 1e-9);
    }

    #[test]
    fn convex_loss_decreases() {
        let (_, losses) =
            adam_descent(&scalar(1.0), AdamConfig { lr: 0.05, ..Default::default() }, 30, |t, _| {
                Ok(quadratic(t))
            })
            .unwrap();
        assert!(losses.last().unwrap() < &losses[0]);
    }

    #[test]
    fn small_data_is_sampled_with_replacement() {
        let mut r = rng::stream(1, &[]);
        let idx = sample_indices(5, 64, &mut r);
        assert_eq!(idx.len(), 64);
        assert!(idx.iter().all(|&i| i < 5));
        let idx = sample_indices(100, 64, &mut r);
        let mut dedup = idx.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 64);
    }
}
