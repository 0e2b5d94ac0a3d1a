use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::config::RulPredictorConfig;
use crate::nn::params::Bound;

/// `û(h, t)`: concatenate `[h, t]`, three tanh layers, a linear layer to
/// `o ∈ R^n`, then `Σ o ⊙ ρ`.
///
/// Accepts a batch (`h: [N, d_h]`, `t: [N, 1]`, returns `[N, 1]`) or a
/// single point (`h: [d_h]`, `t: []`, returns `[]`).
pub fn rul_forward<'g>(
    params: &Bound<'g>,
    cfg: &RulPredictorConfig,
    h: Var<'g>,
    t: Var<'g>,
) -> Result<Var<'g>> {
    let (hs, ts) = (h.shape(), t.shape());
    let single = match (hs.as_slice(), ts.as_slice()) {
        ([_], []) => true,
        ([n, _], [m, 1]) if n == m => false,
        _ => {
            return Err(Error::shape(
                "rul_forward",
                format!("h {hs:?} with t {ts:?}"),
            ))
        }
    };
    let (h, t) = if single {
        (h.reshape(vec![1, hs[0]])?, t.reshape(vec![1, 1])?)
    } else {
        (h, t)
    };

    let mut z = Var::concat_last(&[h, t])?;
    for i in 1..=cfg.hidden_widths.len() {
        z = z
            .matmul(params.get(&format!("rul.l{i}.w"))?)?
            .add_row(params.get(&format!("rul.l{i}.b"))?)?
            .tanh()?;
    }
    let o = z
        .matmul(params.get("rul.l4.w")?)?
        .add_row(params.get("rul.l4.b")?)?;
    let u = o.mul_row(params.get("rul.rho")?)?.sum_last()?;
    if single {
        u.reshape(Vec::new())
    } else {
        Ok(u)
    }
}
