use crate::autodiff::{input_gradient, second_from_first, Var};
use crate::error::Result;
use crate::nn::config::ModelConfig;
use crate::nn::params::Bound;
use crate::nn::pgr::{assemble_pgr_features, pgr_forward};
use crate::nn::rul::rul_forward;

/// Pieces of `r = ∂û/∂t − P(û, ∇_h û, …)` at a batch of points, all `[N, ·]`.
pub struct PdeResidual<'g> {
    pub u: Var<'g>,
    pub du_dt: Var<'g>,
    pub grad_h: Var<'g>,
    pub second_h: Option<Var<'g>>,
    pub operator: Var<'g>,
    pub residual: Var<'g>,
}

/// Residual for an arbitrary predictor output `u = f(h, t)` and operator.
///
/// `h` and `t` must be differentiable nodes. `operator` receives the
/// assembled features and, for test wiring, the autodiff time derivative.
/// Rows are assumed independent, so one backward pass over `Σ u` yields
/// every row's derivatives at once.
pub fn residual_with<'g, F>(
    u: Var<'g>,
    h: Var<'g>,
    t: Var<'g>,
    k_pde: usize,
    operator: F,
) -> Result<PdeResidual<'g>>
where
    F: FnOnce(Var<'g>, Var<'g>) -> Result<Var<'g>>,
{
    let total = u.sum_all()?;
    let grads = u.graph().grad(total, &[h, t])?;
    let (mut grad_h, mut du_dt) = (grads[0], grads[1]);
    let mut second_h = match k_pde {
        1 => None,
        _ => Some(second_from_first(grad_h, h)?),
    };
    let mut u = u;
    if u.shape().is_empty() {
        let dh = grad_h.shape().iter().product::<usize>();
        u = u.reshape(vec![1, 1])?;
        du_dt = du_dt.reshape(vec![1, 1])?;
        grad_h = grad_h.reshape(vec![1, dh])?;
        second_h = second_h.map(|s| s.reshape(vec![1, dh])).transpose()?;
    }
    let features = assemble_pgr_features(k_pde, u, grad_h, second_h)?;
    let operator = operator(features, du_dt)?;
    let residual = du_dt.sub(operator)?;
    Ok(PdeResidual {
        u,
        du_dt,
        grad_h,
        second_h,
        operator,
        residual,
    })
}

/// Residual of the learned PDE at encoded points `(h, t)`.
pub fn pde_residual<'g>(
    params: &Bound<'g>,
    cfg: &ModelConfig,
    h: Var<'g>,
    t: Var<'g>,
) -> Result<PdeResidual<'g>> {
    let u = rul_forward(params, &cfg.rul, h, t)?;
    residual_with(u, h, t, cfg.pgr.k_pde, |features, _| {
        pgr_forward(params, &cfg.pgr, cfg.hsm.hidden_dim, features)
    })
}

/// Time derivative of the predictor alone, `∂û/∂t`.
pub fn time_derivative<'g>(u: Var<'g>, t: Var<'g>) -> Result<Var<'g>> {
    input_gradient(u.sum_all()?, t)
}
