use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::config::PgrConfig;
use crate::nn::params::Bound;

/// Regulator input `[û, ∇_h û (, diag ∇²_h û)]`, all `[N, ·]`.
///
/// The time derivative is deliberately not an input: it is the regulator's
/// regression target.
pub fn assemble_pgr_features<'g>(
    k_pde: usize,
    u: Var<'g>,
    grad_h: Var<'g>,
    second_h: Option<Var<'g>>,
) -> Result<Var<'g>> {
    match (k_pde, second_h) {
        (1, None) => Var::concat_last(&[u, grad_h]),
        (2, Some(s)) => {
            if s.shape() != grad_h.shape() {
                return Err(Error::shape(
                    "assemble_pgr_features",
                    format!("second {:?} vs first {:?}", s.shape(), grad_h.shape()),
                ));
            }
            Var::concat_last(&[u, grad_h, s])
        }
        (k, s) => Err(Error::shape(
            "assemble_pgr_features",
            format!(
                "k_pde = {k} with {} second-derivative block",
                if s.is_some() { "a" } else { "no" }
            ),
        )),
    }
}

/// Predicted `∂û/∂t` from assembled features `[N, d]` -> `[N, 1]`.
pub fn pgr_forward<'g>(
    params: &Bound<'g>,
    cfg: &PgrConfig,
    hidden_dim: usize,
    features: Var<'g>,
) -> Result<Var<'g>> {
    let d = cfg.input_dim(hidden_dim);
    let shape = features.shape();
    if shape.len() != 2 || shape[1] != d {
        return Err(Error::shape(
            "pgr_forward",
            format!("features {shape:?}, expected [N, {d}]"),
        ));
    }
    let mut z = features;
    for i in 1..=cfg.hidden_widths.len() {
        z = z
            .matmul(params.get(&format!("pgr.l{i}.w"))?)?
            .add_row(params.get(&format!("pgr.l{i}.b"))?)?
            .tanh()?;
    }
    z.matmul(params.get("pgr.out.w")?)?
        .add_row(params.get("pgr.out.b")?)
}
