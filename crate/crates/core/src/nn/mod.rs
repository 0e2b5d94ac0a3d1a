//! The three networks and the residual that couples them.

mod config;
mod hsm;
mod params;
mod pgr;
mod residual;
mod rul;

pub use config::{HsmConfig, ModelConfig, PgrConfig, RulPredictorConfig};
pub use hsm::{hsm_forward, Dropout, HsmOutput};
pub use params::{Bound, ParameterSet};
pub use pgr::{assemble_pgr_features, pgr_forward};
pub use residual::{pde_residual, residual_with, time_derivative, PdeResidual};
pub use rul::rul_forward;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, Tensor};
    use crate::rng;
    use rand::Rng as _;

    fn small() -> ModelConfig {
        ModelConfig {
            hsm: HsmConfig {
                time_steps: 5,
                input_features: 3,
                embed_dim: 6,
                key_dim: 4,
                ffn_dim: 8,
                num_blocks: 2,
                hidden_dim: 2,
                dropout_rate: 0.1,
            },
            rul: RulPredictorConfig {
                hidden_widths: [7, 6, 5],
                output_width: 4,
            },
            pgr: PgrConfig {
                k_pde: 1,
                hidden_widths: vec![6],
            },
            layer_norm_eps: 1e-5,
        }
    }

    fn random_windows(n: usize, cfg: &HsmConfig, seed: u64) -> Tensor {
        let mut r = rng::stream(seed, &[]);
        let len = n * cfg.time_steps * cfg.input_features;
        let data = (0..len).map(|_| r.gen_range(-2.0..2.0)).collect();
        Tensor::new(vec![n, cfg.time_steps, cfg.input_features], data).unwrap()
    }

    #[test]
    fn hsm_output_shape() {
        let cfg = small();
        let params = cfg.init_params(&mut rng::stream(1, &[]));
        let g = Graph::new();
        let b = params.bind(&g).unwrap();
        let x = g.constant(random_windows(3, &cfg.hsm, 2));
        let out = hsm_forward(&b, &cfg.hsm, 1e-5, x, None).unwrap();
        assert_eq!(out.hidden.shape(), vec![3, 2]);

        let single = random_windows(1, &cfg.hsm, 3).reshaped(vec![5, 3]).unwrap();
        let out = hsm_forward(&b, &cfg.hsm, 1e-5, g.constant(single), None).unwrap();
        assert_eq!(out.hidden.shape(), vec![2]);
    }

    #[test]
    fn hsm_rejects_wrong_window_shape() {
        let cfg = small();
        let params = cfg.init_params(&mut rng::stream(1, &[]));
        let g = Graph::new();
        let b = params.bind(&g).unwrap();
        let x = g.constant(Tensor::zeros(vec![2, 4, 3]));
        assert!(hsm_forward(&b, &cfg.hsm, 1e-5, x, None).is_err());
    }

    #[test]
    fn attention_rows_are_distributions() {
        let cfg = small();
        let params = cfg.init_params(&mut rng::stream(4, &[]));
        let g = Graph::new();
        let b = params.bind(&g).unwrap();
        let x = g.constant(random_windows(4, &cfg.hsm, 5));
        let out = hsm_forward(&b, &cfg.hsm, 1e-5, x, None).unwrap();
        assert_eq!(out.attention.len(), 2);
        for a in &out.attention {
            let a = a.value();
            for row in a.data().chunks(cfg.hsm.embed_dim) {
                assert!(row.iter().all(|&v| v >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evaluation_mode_is_deterministic() {
        let cfg = small();
        let params = cfg.init_params(&mut rng::stream(6, &[]));
        let x = random_windows(2, &cfg.hsm, 7);
        let run = || {
            let g = Graph::new();
            let b = params.bind_frozen(&g);
            let out = hsm_forward(&b, &cfg.hsm, 1e-5, g.constant(x.clone()), None).unwrap();
            let h = out.hidden.value().clone();
            h
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dropout_changes_training_output() {
        let cfg = small();
        let params = cfg.init_params(&mut rng::stream(6, &[]));
        let x = random_windows(2, &cfg.hsm, 7);
        let g = Graph::new();
        let b = params.bind_frozen(&g);
        let eval = hsm_forward(&b, &cfg.hsm, 1e-5, g.constant(x.clone()), None).unwrap();
        let mut r = rng::stream(9, &[]);
        let mut d = Dropout { rate: 0.5, rng: &mut r };
        let train = hsm_forward(&b, &cfg.hsm, 1e-5, g.constant(x), Some(&mut d)).unwrap();
        assert_ne!(*eval.hidden.value(), *train.hidden.value());
    }

    fn rul_output(params: &ParameterSet, cfg: &ModelConfig, h: Vec<f64>, t: f64) -> (f64, f64) {
        let g = Graph::new();
        let b = params.bind_frozen(&g);
        let hv = g.constant(Tensor::vector(h));
        let tv = g.constant(Tensor::scalar(t));
        let u = rul_forward(&b, &cfg.rul, hv, tv).unwrap().item().unwrap();
        // Σ o_i recomputed with ρ = 1
        let mut ones = params.clone();
        *ones.get_mut("rul.rho").unwrap() = Tensor::ones(vec![cfg.rul.output_width]);
        let b1 = ones.bind_frozen(&g);
        let sum_o = rul_forward(&b1, &cfg.rul, hv, tv).unwrap().item().unwrap();
        (u, sum_o)
    }

    #[test]
    fn zero_rho_annihilates_prediction() {
        let cfg = small();
        let mut params = cfg.init_params(&mut rng::stream(10, &[]));
        *params.get_mut("rul.rho").unwrap() = Tensor::zeros(vec![4]);
        let (u, sum_o) = rul_output(&params, &cfg, vec![0.4, -1.0], 0.3);
        assert_eq!(u, 0.0);
        assert_ne!(sum_o, 0.0);
    }

    #[test]
    fn unit_rho_sums_components() {
        let cfg = small();
        let params = cfg.init_params(&mut rng::stream(11, &[]));
        let (u, sum_o) = rul_output(&params, &cfg, vec![0.4, -1.0], 0.3);
        assert_eq!(u, sum_o);
    }

    /// All widths 1, d_h = 1: every layer is a scalar affine map.
    fn degenerate() -> (ModelConfig, ParameterSet) {
        let mut cfg = small();
        cfg.hsm.hidden_dim = 1;
        cfg.rul = RulPredictorConfig {
            hidden_widths: [1, 1, 1],
            output_width: 1,
        };
        cfg.pgr.hidden_widths = vec![1];
        let mut p = cfg.init_params(&mut rng::stream(0, &[]));
        let set = |p: &mut ParameterSet, name: &str, shape: Vec<usize>, v: Vec<f64>| {
            p.insert(name, Tensor::new(shape, v).unwrap());
        };
        set(&mut p, "rul.l1.w", vec![2, 1], vec![0.5, -0.25]);
        set(&mut p, "rul.l1.b", vec![1], vec![0.1]);
        set(&mut p, "rul.l2.w", vec![1, 1], vec![1.5]);
        set(&mut p, "rul.l2.b", vec![1], vec![-0.2]);
        set(&mut p, "rul.l3.w", vec![1, 1], vec![-0.7]);
        set(&mut p, "rul.l3.b", vec![1], vec![0.05]);
        set(&mut p, "rul.l4.w", vec![1, 1], vec![2.0]);
        set(&mut p, "rul.l4.b", vec![1], vec![0.3]);
        set(&mut p, "rul.rho", vec![1], vec![1.25]);
        set(&mut p, "pgr.l1.w", vec![2, 1], vec![0.8, -0.6]);
        set(&mut p, "pgr.l1.b", vec![1], vec![0.2]);
        set(&mut p, "pgr.out.w", vec![1, 1], vec![1.7]);
        set(&mut p, "pgr.out.b", vec![1], vec![-0.4]);
        (cfg, p)
    }

    #[test]
    fn hand_evaluated_predictor() {
        let (cfg, p) = degenerate();
        let (h, t) = (0.6, 0.8);
        let z1 = (0.5 * h - 0.25 * t + 0.1f64).tanh();
        let z2 = (1.5 * z1 - 0.2f64).tanh();
        let z3 = (-0.7 * z2 + 0.05f64).tanh();
        let expected = (2.0 * z3 + 0.3) * 1.25;
        let (u, _) = rul_output(&p, &cfg, vec![h], t);
        assert!((u - expected).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_regulator() {
        let (cfg, p) = degenerate();
        let g = Graph::new();
        let b = p.bind_frozen(&g);
        let f = g.constant(Tensor::matrix(1, 2, vec![0.9, -0.3]).unwrap());
        let out = pgr_forward(&b, &cfg.pgr, 1, f).unwrap().item().unwrap();
        let expected = 1.7 * (0.8 * 0.9 + (-0.6) * (-0.3) + 0.2f64).tanh() - 0.4;
        assert!((out - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_regulator_outputs_zero() {
        let cfg = small();
        let mut p = cfg.init_params(&mut rng::stream(12, &[]));
        for (name, t) in p.iter_mut() {
            if name.starts_with("pgr.") {
                t.data_mut().fill(0.0);
            }
        }
        let g = Graph::new();
        let b = p.bind_frozen(&g);
        let f = g.constant(Tensor::matrix(2, 3, vec![5.0, -3.0, 1.0, 2.0, 8.0, -9.0]).unwrap());
        let out = pgr_forward(&b, &cfg.pgr, 2, f).unwrap();
        assert_eq!(out.value().data(), &[0.0, 0.0]);
    }

    #[test]
    fn feature_assembly() {
        let g = Graph::new();
        let u = g.constant(Tensor::matrix(1, 1, vec![0.5]).unwrap());
        let grad = g.constant(Tensor::matrix(1, 2, vec![0.1, -0.2]).unwrap());
        let f = assemble_pgr_features(1, u, grad, None).unwrap();
        assert_eq!(f.value().data(), &[0.5, 0.1, -0.2]);

        let second = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let f = assemble_pgr_features(2, u, grad, Some(second)).unwrap();
        assert_eq!(f.shape(), vec![1, 5]);
        assert_eq!(PgrConfig { k_pde: 2, ..Default::default() }.input_dim(2), 5);

        assert!(assemble_pgr_features(2, u, grad, None).is_err());
        assert!(assemble_pgr_features(1, u, grad, Some(second)).is_err());
    }

    #[test]
    fn echoing_operator_gives_zero_residual() {
        let cfg = small();
        let params = cfg.init_params(&mut rng::stream(13, &[]));
        let g = Graph::new();
        let b = params.bind(&g).unwrap();
        let x = g.constant(random_windows(3, &cfg.hsm, 14));
        let h = hsm_forward(&b, &cfg.hsm, 1e-5, x, None).unwrap().hidden;
        let t = g.leaf(Tensor::matrix(3, 1, vec![0.1, 0.5, 0.9]).unwrap()).unwrap();
        let u = rul_forward(&b, &cfg.rul, h, t).unwrap();
        let r = residual_with(u, h, t, 1, |_, du_dt| Ok(du_dt)).unwrap();
        assert!(r.residual.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_predictor_with_unit_operator() {
        let g = Graph::new();
        let h = g.leaf(Tensor::matrix(2, 2, vec![0.3, 0.1, -0.4, 2.0]).unwrap()).unwrap();
        let t = g.leaf(Tensor::matrix(2, 1, vec![0.25, 0.75]).unwrap()).unwrap();
        let u = t.add(h.sum_last().unwrap().scale(0.0).unwrap()).unwrap();
        let r = residual_with(u, h, t, 1, |f, _| {
            f.slice_last(0, 1)?.scale(0.0)?.add_scalar(1.0)
        })
        .unwrap();
        assert_eq!(r.du_dt.value().data(), &[1.0, 1.0]);
        assert!(r.residual.value().data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constant_predictor_gives_minus_operator() {
        let g = Graph::new();
        let h = g.leaf(Tensor::matrix(2, 2, vec![0.3, 0.1, -0.4, 2.0]).unwrap()).unwrap();
        let t = g.leaf(Tensor::matrix(2, 1, vec![0.25, 0.75]).unwrap()).unwrap();
        let u = t.scale(0.0).unwrap().add_scalar(4.0).unwrap();
        let c = 0.625;
        let r = residual_with(u, h, t, 1, |f, _| {
            f.slice_last(0, 1)?.scale(0.0)?.add_scalar(c)
        })
        .unwrap();
        assert!(r.residual.value().data().iter().all(|v| (v + c).abs() < 1e-12));
    }

    #[test]
    fn second_order_features_have_expected_width() {
        let mut cfg = small();
        cfg.pgr.k_pde = 2;
        let params = cfg.init_params(&mut rng::stream(15, &[]));
        let g = Graph::new();
        let b = params.bind(&g).unwrap();
        let x = g.constant(random_windows(2, &cfg.hsm, 16));
        let h = hsm_forward(&b, &cfg.hsm, 1e-5, x, None).unwrap().hidden;
        let t = g.leaf(Tensor::matrix(2, 1, vec![0.2, 0.4]).unwrap()).unwrap();
        let r = pde_residual(&b, &cfg, h, t).unwrap();
        assert_eq!(r.second_h.unwrap().shape(), vec![2, 2]);
        assert_eq!(r.residual.shape(), vec![2, 1]);
    }

    #[test]
    fn config_validation_names_fields() {
        let mut cfg = ModelConfig::default();
        cfg.pgr.k_pde = 3;
        cfg.hsm.dropout_rate = 1.0;
        let problems = cfg.problems();
        assert!(problems.iter().any(|p| p.starts_with("model.pgr.k_pde")));
        assert!(problems.iter().any(|p| p.starts_with("model.hsm.dropout_rate")));
        assert!(ModelConfig::default().validate().is_ok());
    }
}
