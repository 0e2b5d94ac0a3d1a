//! Central finite-difference checks of reverse-mode gradients.

use rand::Rng as _;

use crate::autodiff::{input_gradient, second_input_derivative, Graph, Tensor, Var};
use crate::data::{Batch, SampleWindow};
use crate::error::{Error, Result};
use crate::meta::{LossWeights, Objective};
use crate::nn::{HsmConfig, ModelConfig, PgrConfig, RulPredictorConfig};
use crate::rng::{self, Rng, TAG_CHECK};

/// Largest discrepancies seen over every checked coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn record(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        self.max_abs_error = self.max_abs_error.max(abs);
        self.max_rel_error = self.max_rel_error.max(relative_error(analytic, numeric));
        self.checked += 1;
    }

    pub fn merge(&mut self, other: GradCheck) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.checked += other.checked;
    }
}

/// `|a - n| / max(|a|, |n|, 1)`: relative for large gradients, absolute
/// near zero where a quotient would only measure rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<F>(x: f64, step: f64, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok((f(x + step)? - f(x - step)?) / (2.0 * step))
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let vars = inputs.iter().map(|t| g.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
    f(&g, &vars)?.item()
}

/// Compare the reverse-mode gradient of the scalar `f(inputs)` with
/// central differences in every input coordinate.
pub fn check_gradients<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradCheck>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let vars = inputs.iter().map(|t| g.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&g, &vars)?;
    if !out.shape().is_empty() {
        return Err(Error::NotScalar(out.shape()));
    }
    let analytic = g.gradients(out, &vars)?;

    let mut report = GradCheck::default();
    let mut probe = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..probe[i].numel() {
            let x0 = probe[i].data()[j];
            let numeric = central_difference(x0, step, |x| {
                probe[i].data_mut()[j] = x;
                evaluate(&probe, &f)
            })?;
            probe[i].data_mut()[j] = x0;
            report.record(grad.data()[j], numeric);
        }
    }
    Ok(report)
}

/// `Σ w ⊙ y`: reduces a tensor output to a scalar with fixed weights, so
/// every output element contributes a distinct amount to the check.
pub fn weighted_sum<'g>(y: Var<'g>, weights: &Tensor) -> Result<Var<'g>> {
    let w = y.graph().constant(weights.clone());
    y.mul(w)?.sum_all()
}

/// Fixed, non-differentiable arguments of the ops under test.
struct Settings {
    scale: f64,
    power: f64,
    start: usize,
    len: usize,
    before: usize,
    after: usize,
    rows: usize,
    cols: usize,
}

type OpFn = for<'g> fn(&[Var<'g>], &Settings) -> Result<Var<'g>>;

struct OpCase {
    name: &'static str,
    inputs: Vec<Tensor>,
    f: OpFn,
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape matches data")
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let mut t = uniform(rng, shape, 0.1, 1.5);
    for v in t.data_mut() {
        if rng.gen_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn cases(rng: &mut Rng) -> (Settings, Vec<OpCase>) {
    let r = rng.gen_range(2..=4);
    let c = rng.gen_range(2..=4);
    let k = rng.gen_range(2..=4);
    let b = rng.gen_range(2..=3);
    let start = rng.gen_range(0..c);
    let settings = Settings {
        scale: rng.gen_range(-2.0..2.0),
        power: [-1.5, 0.5, 3.0][rng.gen_range(0..3)],
        start,
        len: rng.gen_range(1..=c - start),
        before: rng.gen_range(0..3),
        after: rng.gen_range(0..3),
        rows: r,
        cols: c,
    };
    let mut u = |shape: &[usize], lo: f64, hi: f64| uniform(rng, shape, lo, hi);
    let a = u(&[r, c], -1.0, 1.0);
    let a2 = u(&[r, c], -1.0, 1.0);
    let row = u(&[c], -1.0, 1.0);
    let col = u(&[r, 1], -1.0, 1.0);
    let cube = u(&[b, r, c], -1.0, 1.0);
    let w = u(&[c, k], -1.0, 1.0);
    let positive = u(&[r, c], 0.5, 2.0);
    let m1 = u(&[r, k], -1.0, 1.0);
    let m2 = u(&[k, c], -1.0, 1.0);
    let b1 = u(&[b, r, k], -1.0, 1.0);
    let b2 = u(&[b, k, c], -1.0, 1.0);
    let other = u(&[r, k], -1.0, 1.0);
    let logits = u(&[b, r, c], -3.0, 3.0);
    let spread = u(&[b, r, c], -2.0, 2.0);
    let kinked = away_from_zero(rng, &[r, c]);

    let case = |name, inputs: Vec<Tensor>, f: OpFn| OpCase { name, inputs, f };
    let cases = vec![
        case("add", vec![a.clone(), a2.clone()], |v, _| v[0].add(v[1])),
        case("sub", vec![a.clone(), a2.clone()], |v, _| v[0].sub(v[1])),
        case("mul", vec![a.clone(), a2], |v, _| v[0].mul(v[1])),
        case("square", vec![a.clone()], |v, _| v[0].square()),
        case("scale", vec![a.clone()], |v, s| v[0].scale(s.scale)),
        case("neg", vec![a.clone()], |v, _| v[0].neg()),
        case("add_scalar", vec![a.clone()], |v, s| v[0].add_scalar(s.scale)),
        case("tanh", vec![a.clone()], |v, _| v[0].tanh()),
        case("relu", vec![kinked], |v, _| v[0].relu()),
        case("exp", vec![a.clone()], |v, _| v[0].exp()),
        case("powf", vec![positive], |v, s| v[0].powf(s.power)),
        case("matmul", vec![m1, m2], |v, _| v[0].matmul(v[1])),
        case("bmm", vec![b1, b2], |v, _| v[0].bmm(v[1])),
        case("transpose", vec![cube.clone()], |v, _| v[0].transpose()),
        case("reshape", vec![a.clone()], |v, s| v[0].reshape(vec![s.cols, s.rows])),
        case("broadcast_to", vec![row.clone()], |v, s| v[0].broadcast_to(&[s.rows, s.cols])),
        case("sum_to", vec![cube.clone()], |v, s| v[0].sum_to(&[s.rows, s.cols])),
        case("sum_all", vec![a.clone()], |v, _| v[0].sum_all()),
        case("mean_all", vec![a.clone()], |v, _| v[0].mean_all()),
        case("expand_last", vec![col], |v, s| v[0].expand_last(s.cols)),
        case("sum_last", vec![cube.clone()], |v, _| v[0].sum_last()),
        case("slice_last", vec![a.clone()], |v, s| v[0].slice_last(s.start, s.len)),
        case("pad_last", vec![a.clone()], |v, s| v[0].pad_last(s.before, s.after)),
        case("concat_last", vec![a.clone(), other], |v, _| Var::concat_last(&[v[0], v[1]])),
        case("add_row", vec![a.clone(), row.clone()], |v, _| v[0].add_row(v[1])),
        case("mul_row", vec![a.clone(), row], |v, _| v[0].mul_row(v[1])),
        case("softmax_last", vec![logits], |v, _| v[0].softmax_last()),
        case("layer_norm_last", vec![spread], |v, _| v[0].layer_norm_last(1e-5)),
        case("mean_axis1", vec![cube], |v, _| v[0].mean_axis1()),
        case("input_gradient", vec![a.clone(), w.clone()], |v, _| {
            let y = v[0].matmul(v[1])?.tanh()?.square()?.sum_all()?;
            input_gradient(y, v[0])
        }),
        case("second_input_derivative", vec![a, w], |v, _| {
            let y = v[0].matmul(v[1])?.tanh()?.powf(3.0)?.sum_all()?;
            second_input_derivative(y, v[0])
        }),
    ];
    (settings, cases)
}

/// Gradient check of every differentiable op, including first and second
/// input derivatives, on inputs drawn from `seed`. Tensor outputs are
/// reduced with random weights.
pub fn op_suite(seed: u64, step: f64) -> Result<Vec<(&'static str, GradCheck)>> {
    let mut rng = rng::stream(seed, &[TAG_CHECK, 0]);
    let (settings, cases) = cases(&mut rng);
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let shape = {
            let g = Graph::new();
            let vars: Vec<Var> = case.inputs.iter().map(|t| g.constant(t.clone())).collect();
            (case.f)(&vars, &settings)?.shape()
        };
        let weights = uniform(&mut rng, &shape, -1.0, 1.0);
        let f = case.f;
        let report = check_gradients(&case.inputs, step, |_, v| weighted_sum(f(v, &settings)?, &weights))?;
        out.push((case.name, report));
    }
    Ok(out)
}

/// A model small enough for exhaustive finite differences, with every
/// component present.
pub fn tiny_model(k_pde: usize) -> ModelConfig {
    ModelConfig {
        hsm: HsmConfig {
            time_steps: 4,
            input_features: 3,
            embed_dim: 4,
            key_dim: 3,
            ffn_dim: 5,
            num_blocks: 2,
            hidden_dim: 2,
            dropout_rate: 0.1,
        },
        rul: RulPredictorConfig {
            hidden_widths: [5, 5, 4],
            output_width: 3,
        },
        pgr: PgrConfig {
            k_pde,
            hidden_widths: vec![5],
        },
        layer_norm_eps: 1e-5,
    }
}

/// Parameter gradients of the full weighted data + physics loss against
/// central differences, in up to `coords` randomly chosen coordinates.
/// Alternates between first- and second-order regulator inputs.
pub fn loss_gradient_check(seed: u64, step: f64, coords: usize) -> Result<GradCheck> {
    let mut rng = rng::stream(seed, &[TAG_CHECK, 1]);
    let model = tiny_model(1 + (seed % 2) as usize);
    let mut params = model.init_params(&mut rng);
    // nonzero biases and gains away from one exercise every term
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let windows: Vec<SampleWindow> = (0..3)
        .map(|_| SampleWindow {
            features: uniform(&mut rng, &[4, 3], -1.5, 1.5),
            run_time: rng.gen_range(0.05..1.0),
            rul: rng.gen_range(0.0..125.0),
        })
        .collect();
    let batch = Batch::new(&windows)?;
    let weights = LossWeights {
        data: rng.gen_range(0.5..1.5),
        physics: rng.gen_range(0.5..1.5),
    };
    let objective = Objective::new(model, weights, 125.0);

    let (_, grads) = objective.loss_and_grad(&params, &batch, None)?;
    let analytic = grads.flatten();
    let mut flat = params.flatten();
    let mut report = GradCheck::default();
    for _ in 0..coords.min(flat.len()) {
        let i = rng.gen_range(0..flat.len());
        let x0 = flat[i];
        let numeric = central_difference(x0, step, |x| {
            flat[i] = x;
            Ok(objective.evaluate(&params.with_flat(&flat)?, &batch)?.total)
        })?;
        flat[i] = x0;
        report.record(analytic[i], numeric);
    }
    params.check_aligned(&grads)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_matches() {
        let r = check_gradients(&[Tensor::vector(vec![0.3, -1.2, 2.0])], 1e-5, |_, v| {
            v[0].powf(3.0)?.sum_all()
        })
        .unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        // relu has a kink at zero: the one-sided analytic slope disagrees
        // with the symmetric difference
        let r = check_gradients(&[Tensor::scalar(0.0)], 1e-5, |_, v| v[0].relu()).unwrap();
        assert!(r.max_rel_error > 0.1);
    }
}
