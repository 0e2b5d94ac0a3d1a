use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::{
    hsm_forward, pgr_forward, residual_with, rul_forward, Bound, Dropout, ModelConfig,
    ParameterSet,
};
use crate::rng::Rng;

/// `w_d · L_data + w_p · L_phy`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub data: f64,
    pub physics: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            data: 1.0,
            physics: 1.0,
        }
    }
}

impl LossWeights {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("loss.data", self.data), ("loss.physics", self.physics)] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(format!("{name}: {v} must be finite and >= 0"));
            }
        }
        out
    }
}

/// Scalar values of one loss evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub data: f64,
    pub physics: f64,
    pub total: f64,
}

/// Graph nodes of one loss evaluation.
pub struct LossTerms<'g> {
    pub data: Var<'g>,
    pub physics: Option<Var<'g>>,
    pub total: Var<'g>,
    /// `[N, 1]` predictions in model units.
    pub prediction: Var<'g>,
}

impl LossTerms<'_> {
    pub fn values(&self) -> Result<LossValues> {
        Ok(LossValues {
            data: self.data.item()?,
            physics: match self.physics {
                Some(p) => p.item()?,
                None => 0.0,
            },
            total: self.total.item()?,
        })
    }
}

/// The training objective: model, loss weights, and the factor that maps
/// RUL labels into model units (`target = u / label_scale`).
#[derive(Clone, Debug)]
pub struct Objective {
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub label_scale: f64,
}

impl Objective {
    pub fn new(model: ModelConfig, weights: LossWeights, label_scale: f64) -> Self {
        Self {
            model,
            weights,
            label_scale,
        }
    }

    /// With zero physics weight the residual is not built at all.
    pub fn uses_physics(&self) -> bool {
        self.weights.physics > 0.0
    }

    pub fn terms<'g>(
        &self,
        graph: &'g Graph,
        params: &Bound<'g>,
        batch: &Batch,
        dropout: Option<&mut Dropout<'_>>,
    ) -> Result<LossTerms<'g>> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let cfg = &self.model;
        let x = graph.constant(batch.x.clone());
        let t = graph.leaf(batch.t.clone())?;
        let target = graph.constant(batch.u.map(|v| v / self.label_scale));

        let h = hsm_forward(params, &cfg.hsm, cfg.layer_norm_eps, x, dropout)?.hidden;
        let u = rul_forward(params, &cfg.rul, h, t)?;
        let data = u.sub(target)?.square()?.mean_all()?;

        let physics = if self.uses_physics() {
            let r = residual_with(u, h, t, cfg.pgr.k_pde, |features, _| {
                pgr_forward(params, &cfg.pgr, cfg.hsm.hidden_dim, features)
            })?;
            Some(r.residual.square()?.mean_all()?)
        } else {
            None
        };

        let mut total = data.scale(self.weights.data)?;
        if let Some(p) = physics {
            total = total.add(p.scale(self.weights.physics)?)?;
        }
        Ok(LossTerms {
            data,
            physics,
            total,
            prediction: u,
        })
    }

    /// Loss values and parameter gradients of the total loss. Passing an
    /// RNG enables dropout (training mode).
    pub fn loss_and_grad(
        &self,
        params: &ParameterSet,
        batch: &Batch,
        rng: Option<&mut Rng>,
    ) -> Result<(LossValues, ParameterSet)> {
        let graph = Graph::new();
        let bound = params.bind(&graph)?;
        let mut dropout = rng.map(|rng| Dropout {
            rate: self.model.hsm.dropout_rate,
            rng,
        });
        let terms = self.terms(&graph, &bound, batch, dropout.as_mut())?;
        let values = terms.values()?;
        let grads = bound.gradients(terms.total)?;
        Ok((values, grads))
    }

    /// Evaluation-mode loss values.
    pub fn evaluate(&self, params: &ParameterSet, batch: &Batch) -> Result<LossValues> {
        let graph = Graph::new();
        let bound = params.bind_frozen(&graph);
        self.terms(&graph, &bound, batch, None)?.values()
    }

    /// Evaluation-mode predictions in original RUL units.
    pub fn predict(&self, params: &ParameterSet, batch: &Batch) -> Result<Vec<f64>> {
        let graph = Graph::new();
        let bound = params.bind_frozen(&graph);
        let cfg = &self.model;
        let x = graph.constant(batch.x.clone());
        let t = graph.constant(batch.t.clone());
        let h = hsm_forward(&bound, &cfg.hsm, cfg.layer_norm_eps, x, None)?.hidden;
        let u = rul_forward(&bound, &cfg.rul, h, t)?;
        let out = u.value().data().iter().map(|v| v * self.label_scale).collect();
        Ok(out)
    }
}

/// Mean squared error between labels and predictions (model units).
pub fn data_loss(objective: &Objective, params: &ParameterSet, batch: &Batch) -> Result<f64> {
    Ok(objective.evaluate(params, batch)?.data)
}

/// Mean squared PDE residual over the batch's own encoded points.
pub fn physics_loss(objective: &Objective, params: &ParameterSet, batch: &Batch) -> Result<f64> {
    let mut o = objective.clone();
    o.weights.physics = 1.0;
    Ok(o.evaluate(params, batch)?.physics)
}

pub fn total_loss(objective: &Objective, params: &ParameterSet, batch: &Batch) -> Result<f64> {
    Ok(objective.evaluate(params, batch)?.total)
}

/// `w_d · data + w_p · physics` on precomputed values.
pub fn combine(weights: LossWeights, data: f64, physics: f64) -> f64 {
    weights.data * data + weights.physics * physics
}
