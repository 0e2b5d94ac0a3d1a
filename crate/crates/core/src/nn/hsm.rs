//! Hidden state mapper: feature-axis self-attention encoder.
//!
//! Each embedded feature dimension is treated as a length-`T` column; the
//! columns attend to each other, so the attention matrix is `d_e × d_e` per
//! sample. Query/key projections map `T -> d_k`, the value projection
//! `T -> T`.

use rand::Rng as _;

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::config::HsmConfig;
use crate::nn::params::Bound;
use crate::rng::Rng;

/// Inverted dropout. Absent in evaluation mode.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

impl Dropout<'_> {
    pub fn apply<'g>(&mut self, x: Var<'g>) -> Result<Var<'g>> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let shape = x.shape();
        let n: usize = shape.iter().product();
        let mask = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        x.mul(x.graph().constant(Tensor::new(shape, mask)?))
    }
}

pub struct HsmOutput<'g> {
    /// `[N, d_h]`, or `[d_h]` for a single unbatched window.
    pub hidden: Var<'g>,
    /// One `[N, d_e, d_e]` row-stochastic matrix per block.
    pub attention: Vec<Var<'g>>,
}

/// Encode windows `[N, T, d_x]` (or one window `[T, d_x]`) into hidden
/// states.
pub fn hsm_forward<'g>(
    params: &Bound<'g>,
    cfg: &HsmConfig,
    layer_norm_eps: f64,
    x: Var<'g>,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<HsmOutput<'g>> {
    let shape = x.shape();
    let (single, x) = match shape.as_slice() {
        [t, f] if *t == cfg.time_steps && *f == cfg.input_features => {
            (true, x.reshape(vec![1, *t, *f])?)
        }
        [_, t, f] if *t == cfg.time_steps && *f == cfg.input_features => (false, x),
        _ => {
            return Err(Error::shape(
                "hsm_forward",
                format!(
                    "input {shape:?}, expected [N, {}, {}]",
                    cfg.time_steps, cfg.input_features
                ),
            ))
        }
    };
    let n = x.shape()[0];
    let (t, de, dk) = (cfg.time_steps, cfg.embed_dim, cfg.key_dim);
    let inv_sqrt_dk = 1.0 / (dk as f64).sqrt();

    let mut e = x
        .reshape(vec![n * t, cfg.input_features])?
        .matmul(params.get("hsm.embed.w")?)?
        .add_row(params.get("hsm.embed.b")?)?
        .reshape(vec![n, t, de])?;

    let mut attention = Vec::with_capacity(cfg.num_blocks);
    for b in 0..cfg.num_blocks {
        let p = |s: &str| params.get(&format!("hsm.block{b}.{s}"));

        let columns = e.transpose()?.reshape(vec![n * de, t])?;
        let q = columns.matmul(p("wq")?)?.reshape(vec![n, de, dk])?;
        let k = columns.matmul(p("wk")?)?.reshape(vec![n, de, dk])?;
        let v = columns.matmul(p("wv")?)?.reshape(vec![n, de, t])?;
        let weights = q.bmm(k.transpose()?)?.scale(inv_sqrt_dk)?.softmax_last()?;
        let mut attended = weights.bmm(v)?.transpose()?;
        attention.push(weights);
        if let Some(d) = dropout.as_deref_mut() {
            attended = d.apply(attended)?;
        }
        let e1 = e
            .add(attended)?
            .layer_norm_last(layer_norm_eps)?
            .mul_row(p("ln1.gain")?)?
            .add_row(p("ln1.bias")?)?;

        let mut ffn = e1
            .reshape(vec![n * t, de])?
            .matmul(p("ffn1.w")?)?
            .add_row(p("ffn1.b")?)?
            .relu()?
            .matmul(p("ffn2.w")?)?
            .add_row(p("ffn2.b")?)?
            .reshape(vec![n, t, de])?;
        if let Some(d) = dropout.as_deref_mut() {
            ffn = d.apply(ffn)?;
        }
        e = e1
            .add(ffn)?
            .layer_norm_last(layer_norm_eps)?
            .mul_row(p("ln2.gain")?)?
            .add_row(p("ln2.bias")?)?;
    }

    let mut hidden = e
        .mean_axis1()?
        .matmul(params.get("hsm.proj.w")?)?
        .add_row(params.get("hsm.proj.b")?)?;
    if single {
        hidden = hidden.reshape(vec![cfg.hidden_dim])?;
    }
    Ok(HsmOutput { hidden, attention })
}
