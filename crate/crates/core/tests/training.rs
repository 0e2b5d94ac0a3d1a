use mkdpinn_core::data::FleetSpec;
use mkdpinn_core::meta::{few_shot_adapt, meta_update, validation_loss};
use mkdpinn_core::nn::{HsmConfig, PgrConfig, RulPredictorConfig};
use mkdpinn_core::persist::{parse_config, DatasetKind};
use mkdpinn_core::run::{load_dataset, train, training_tasks};
use mkdpinn_core::{ModelConfig, RunConfig};

fn small_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.dataset.kind = DatasetKind::Synthetic;
    cfg.dataset.fleet = FleetSpec {
        units: 8,
        min_life: 40,
        max_life: 60,
        features: 4,
        ..FleetSpec::default()
    };
    cfg.dataset.fleet_window = 10;
    cfg.dataset.holdout_units = 2;
    cfg.model = ModelConfig {
        hsm: HsmConfig {
            time_steps: 10,
            input_features: 4,
            embed_dim: 8,
            key_dim: 4,
            ffn_dim: 8,
            num_blocks: 1,
            hidden_dim: 2,
            dropout_rate: 0.1,
        },
        rul: RulPredictorConfig {
            hidden_widths: [8, 8, 8],
            output_width: 4,
        },
        pgr: PgrConfig {
            k_pde: 1,
            hidden_widths: vec![8],
        },
        layer_norm_eps: 1e-5,
    };
    cfg.meta.inner_steps = 3;
    cfg.meta.inner_batch_size = 8;
    cfg.meta.meta_batch_size = 2;
    cfg.meta.epochs = 3;
    cfg.meta.validation_fraction = 0.2;
    cfg
}

#[test]
fn same_seed_gives_identical_loss_history() {
    let cfg = small_config(7);
    let data = load_dataset(&cfg).unwrap();
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert!(!a.log.records.is_empty());
    assert_eq!(a.log.loss_bits(), b.log.loss_bits());
    assert_eq!(a.best.flatten(), b.best.flatten());
    let c = train(&small_config(8), &load_dataset(&small_config(8)).unwrap()).unwrap();
    assert_ne!(a.log.loss_bits(), c.log.loss_bits());
}

#[test]
fn epochs_and_validation_are_logged() {
    let cfg = small_config(1);
    let data = load_dataset(&cfg).unwrap();
    let out = train(&cfg, &data).unwrap();
    // 6 training units, 1 held out for validation, meta-batch 2
    let per_epoch = 5usize.div_ceil(2);
    assert_eq!(out.log.records.len(), cfg.meta.epochs * per_epoch);
    let validated: Vec<_> = out.log.records.iter().filter(|r| r.val_loss.is_some()).collect();
    assert_eq!(validated.len(), cfg.meta.epochs);
    assert!(out.best_val_loss.unwrap() <= out.initial_val_loss.unwrap());
    let mut csv = Vec::new();
    out.log.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("iteration,epoch,train_loss,val_loss\n"));
    assert_eq!(text.lines().count(), out.log.records.len() + 1);
}

#[test]
fn zero_shot_and_unit_rate_updates_are_exact() {
    let cfg = small_config(2);
    let data = load_dataset(&cfg).unwrap();
    let tasks = training_tasks(&cfg, &data).unwrap();
    let objective = cfg.objective(data.label_scale);
    let phi = cfg.model.init_seeded(2);
    let mut rng = mkdpinn_core::rng::stream(0, &[]);
    let same = few_shot_adapt(&phi, &[], &objective, &cfg.meta.adapt_loop(), &mut rng).unwrap();
    assert_eq!(same, phi);
    let theta = few_shot_adapt(&phi, &tasks[0].support, &objective, &cfg.meta.adapt_loop(), &mut rng).unwrap();
    assert_ne!(theta, phi);
    assert_eq!(meta_update(&phi, &[phi.clone(), phi.clone()], 0.1).unwrap(), phi);
    assert_eq!(meta_update(&phi, std::slice::from_ref(&theta), 1.0).unwrap(), theta);
    let v = validation_loss(&phi, &tasks[..2].iter().collect::<Vec<_>>(), &objective, &cfg.meta.inner_loop(), 3);
    assert!(v.unwrap().is_finite());
}

#[test]
fn invalid_overrides_name_the_field() {
    let e = parse_config(r#"{"meta": {"adapt_lr": -0.1}}"#).unwrap().validate().unwrap_err().to_string();
    assert!(e.contains("meta.adapt_lr"), "{e}");
    let e = parse_config(r#"{"tasks": {"kind": "per_unit", "support_fraction": 2.0}}"#)
        .and_then(|c| c.validate())
        .unwrap_err()
        .to_string();
    assert!(e.contains("tasks"), "{e}");
}
