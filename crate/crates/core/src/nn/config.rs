use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::params::{fan_in_uniform, ParameterSet};
use crate::rng::Rng;

/// Shape of the attention encoder that maps a sensor window to a hidden
/// state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsmConfig {
    pub time_steps: usize,
    pub input_features: usize,
    pub embed_dim: usize,
    pub key_dim: usize,
    pub ffn_dim: usize,
    pub num_blocks: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
}

impl Default for HsmConfig {
    fn default() -> Self {
        Self {
            time_steps: 15,
            input_features: 14,
            embed_dim: 32,
            key_dim: 16,
            ffn_dim: 64,
            num_blocks: 2,
            hidden_dim: 4,
            dropout_rate: 0.1,
        }
    }
}

/// Four affine layers: three tanh hidden layers and a linear output of
/// width `output_width`, weighted by the learnable vector `rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulPredictorConfig {
    pub hidden_widths: [usize; 3],
    pub output_width: usize,
}

impl Default for RulPredictorConfig {
    fn default() -> Self {
        Self {
            hidden_widths: [64, 64, 32],
            output_width: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgrConfig {
    /// Highest derivative order with respect to the hidden state (1 or 2).
    pub k_pde: usize,
    pub hidden_widths: Vec<usize>,
}

impl Default for PgrConfig {
    fn default() -> Self {
        Self {
            k_pde: 1,
            hidden_widths: vec![64, 64],
        }
    }
}

impl PgrConfig {
    /// Length of the regulator's input: `û`, then `k_pde` blocks of `d_h`
    /// derivatives.
    pub fn input_dim(&self, hidden_dim: usize) -> usize {
        1 + hidden_dim * self.k_pde
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hsm: HsmConfig,
    pub rul: RulPredictorConfig,
    pub pgr: PgrConfig,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hsm: HsmConfig::default(),
            rul: RulPredictorConfig::default(),
            pgr: PgrConfig::default(),
            layer_norm_eps: 1e-5,
        }
    }
}

fn push_dense(
    params: &mut ParameterSet,
    rng: &mut Rng,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) {
    params.insert(format!("{prefix}.w"), fan_in_uniform(rng, fan_in, fan_out));
    params.insert(format!("{prefix}.b"), Tensor::zeros(vec![fan_out]));
}

impl ModelConfig {
    /// Every violated invariant, as `field: problem` strings.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let h = &self.hsm;
        for (name, v) in [
            ("hsm.time_steps", h.time_steps),
            ("hsm.input_features", h.input_features),
            ("hsm.embed_dim", h.embed_dim),
            ("hsm.key_dim", h.key_dim),
            ("hsm.ffn_dim", h.ffn_dim),
            ("hsm.num_blocks", h.num_blocks),
            ("hsm.hidden_dim", h.hidden_dim),
            ("rul.output_width", self.rul.output_width),
        ] {
            if v == 0 {
                out.push(format!("model.{name}: must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&h.dropout_rate) {
            out.push(format!(
                "model.hsm.dropout_rate: {} not in [0, 1)",
                h.dropout_rate
            ));
        }
        if self.rul.hidden_widths.contains(&0) {
            out.push("model.rul.hidden_widths: widths must be >= 1".into());
        }
        if !(1..=2).contains(&self.pgr.k_pde) {
            out.push(format!("model.pgr.k_pde: {} not in {{1, 2}}", self.pgr.k_pde));
        }
        if self.pgr.hidden_widths.contains(&0) {
            out.push("model.pgr.hidden_widths: widths must be >= 1".into());
        }
        if !(self.layer_norm_eps > 0.0 && self.layer_norm_eps.is_finite()) {
            out.push("model.layer_norm_eps: must be positive".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// [`init_params`](Self::init_params) from the run seed's
    /// initialization stream.
    pub fn init_seeded(&self, seed: u64) -> ParameterSet {
        self.init_params(&mut crate::rng::stream(seed, &[crate::rng::TAG_INIT]))
    }

    /// Fresh parameters: fan-in uniform weights, zero biases, unit
    /// layer-norm gains and an all-ones output weighting.
    pub fn init_params(&self, rng: &mut Rng) -> ParameterSet {
        let mut p = ParameterSet::new();
        let h = &self.hsm;

        push_dense(&mut p, rng, "hsm.embed", h.input_features, h.embed_dim);
        for b in 0..h.num_blocks {
            let pre = format!("hsm.block{b}");
            p.insert(format!("{pre}.wq"), fan_in_uniform(rng, h.time_steps, h.key_dim));
            p.insert(format!("{pre}.wk"), fan_in_uniform(rng, h.time_steps, h.key_dim));
            p.insert(
                format!("{pre}.wv"),
                fan_in_uniform(rng, h.time_steps, h.time_steps),
            );
            push_dense(&mut p, rng, &format!("{pre}.ffn1"), h.embed_dim, h.ffn_dim);
            push_dense(&mut p, rng, &format!("{pre}.ffn2"), h.ffn_dim, h.embed_dim);
            for ln in ["ln1", "ln2"] {
                p.insert(format!("{pre}.{ln}.gain"), Tensor::ones(vec![h.embed_dim]));
                p.insert(format!("{pre}.{ln}.bias"), Tensor::zeros(vec![h.embed_dim]));
            }
        }
        push_dense(&mut p, rng, "hsm.proj", h.embed_dim, h.hidden_dim);

        let mut fan_in = h.hidden_dim + 1;
        for (i, &w) in self.rul.hidden_widths.iter().enumerate() {
            push_dense(&mut p, rng, &format!("rul.l{}", i + 1), fan_in, w);
            fan_in = w;
        }
        push_dense(&mut p, rng, "rul.l4", fan_in, self.rul.output_width);
        p.insert("rul.rho", Tensor::ones(vec![self.rul.output_width]));

        let mut fan_in = self.pgr.input_dim(h.hidden_dim);
        for (i, &w) in self.pgr.hidden_widths.iter().enumerate() {
            push_dense(&mut p, rng, &format!("pgr.l{}", i + 1), fan_in, w);
            fan_in = w;
        }
        push_dense(&mut p, rng, "pgr.out", fan_in, 1);
        p
    }
}
