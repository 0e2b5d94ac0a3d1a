use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mkdpinn_core::data::cache::{read_windows, write_processed};
use mkdpinn_core::data::synth::{synthetic_cmapss, write_cmapss, CmapssFixture};
use mkdpinn_core::data::{synthesize_degradation_fleet, Subset};
use mkdpinn_core::eval::{draw_support, emit_report, FewShotEval, ReportFormat};
use mkdpinn_core::meta::few_shot_adapt;
use mkdpinn_core::persist::{load_checkpoint, load_config, save_checkpoint, write_atomic, DatasetKind};
use mkdpinn_core::run::{ablate, evaluate, load_dataset, train, Evaluation};
use mkdpinn_core::{rng, Checkpoint, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "mkdpinn", version, about = "Meta-learned physics-informed remaining-useful-life prediction")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, standardize and window a dataset into a cache directory.
    Preprocess(Common),
    /// Meta-train from the seeded initialization; writes checkpoints and the training log.
    MetaTrain(Common),
    /// Adapt a checkpoint to K support windows and write the adapted checkpoint.
    Adapt(AdaptArgs),
    /// Score a checkpoint on the evaluation units and write metric reports.
    Evaluate(EvaluateArgs),
    /// Train and score the four physics-loss / meta-training variants.
    Ablate(Common),
    /// Generate a synthetic degradation fleet, or C-MAPSS-format files with --subset.
    Synth(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// C-MAPSS subset; selects the C-MAPSS dataset.
    #[arg(long, value_name = "FD00x", value_parser = parse_subset)]
    subset: Option<Subset>,
    /// C-MAPSS directory, or the cache directory for a processed dataset.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AdaptArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Window CSV (the layout of a cache's train.csv / test.csv).
    #[arg(long, value_name = "PATH")]
    support: PathBuf,
    #[arg(long, value_name = "K")]
    shots: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Support windows per unit for few-shot datasets; defaults to meta.shots.
    #[arg(long, value_name = "K")]
    shots: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    format: FormatArg,
}

fn parse_subset(s: &str) -> std::result::Result<Subset, String> {
    s.parse().map_err(|e: mkdpinn_core::Error| e.to_string())
}

/// Config file (or `base`, or the defaults) with command-line overrides.
fn resolve(c: &Common, base: Option<RunConfig>) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None => base.unwrap_or_default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(subset) = c.subset {
        cfg.dataset.kind = DatasetKind::Cmapss;
        cfg.dataset.subset = subset;
    }
    if let Some(dir) = &c.data {
        match cfg.dataset.kind {
            DatasetKind::Processed => cfg.dataset.processed = Some(dir.clone()),
            _ => cfg.dataset.root = Some(dir.clone()),
        }
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg)? + "\n";
    Ok(write_atomic(path, text.as_bytes())?)
}

/// A config that reads the cache just written to `dir`.
fn write_cache_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let mut cached = cfg.clone();
    cached.dataset.kind = DatasetKind::Processed;
    cached.dataset.processed = Some(dir.to_path_buf());
    write_config(&dir.join("config.json"), &cached)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(c) => preprocess(&c),
        Command::MetaTrain(c) => meta_train(&c),
        Command::Adapt(a) => adapt(&a),
        Command::Evaluate(e) => evaluate_cmd(&e),
        Command::Ablate(c) => ablate_cmd(&c),
        Command::Synth(c) => synth(&c),
    }
}

fn preprocess(c: &Common) -> Result<()> {
    let cfg = resolve(c, None)?;
    cfg.validate()?;
    let data = load_dataset(&cfg)?;
    let dir = out_dir(&cfg)?;
    write_processed(dir, &data.to_processed(cfg.seed))?;
    write_cache_config(dir, &cfg)?;
    println!(
        "{}: {} training and {} evaluation units written to {}",
        data.source,
        data.train.len(),
        data.eval.len(),
        dir.display()
    );
    Ok(())
}

fn meta_train(c: &Common) -> Result<()> {
    let cfg = resolve(c, None)?;
    cfg.validate()?;
    let data = load_dataset(&cfg)?;
    let outcome = train(&cfg, &data)?;
    let dir = out_dir(&cfg)?;
    let last_iteration = outcome.log.records.last().map_or(0, |r| r.iteration + 1) as u64;
    for (name, params, iteration) in [
        ("model.ckpt", &outcome.best, outcome.best_iteration as u64),
        ("last.ckpt", &outcome.last, last_iteration),
    ] {
        let ck = Checkpoint {
            config: cfg.clone(),
            label_scale: data.label_scale,
            seed: cfg.seed,
            iteration,
            params: params.clone(),
        };
        save_checkpoint(&ck, &dir.join(name))?;
    }
    let mut log = Vec::new();
    outcome.log.write_csv(&mut log)?;
    write_atomic(&dir.join("training_log.csv"), &log)?;
    write_config(&dir.join("config.json"), &cfg)?;
    let seconds = outcome.log.records.last().map_or(0.0, |r| r.seconds);
    match outcome.best_val_loss {
        Some(v) => println!(
            "{} iterations in {seconds:.1}s; best validation loss {v:.6e} at iteration {}; wrote {}",
            outcome.log.records.len(),
            outcome.best_iteration,
            dir.display()
        ),
        None => println!(
            "{} iterations in {seconds:.1}s; no validation split; wrote {}",
            outcome.log.records.len(),
            dir.display()
        ),
    }
    Ok(())
}

fn adapt(a: &AdaptArgs) -> Result<()> {
    let base = load_checkpoint(&a.checkpoint)?;
    let mut cfg = resolve(&a.common, Some(base.config.clone()))?;
    cfg.model = base.config.model.clone();
    let shape = mkdpinn_core::data::WindowShape {
        time_steps: cfg.model.hsm.time_steps,
        features: cfg.model.hsm.input_features,
    };
    let pool: Vec<_> = read_windows(&a.support, shape)?
        .into_iter()
        .flat_map(|u| u.windows)
        .collect();
    let support = draw_support(&pool, a.shots, cfg.seed)?;
    let objective = cfg.objective(base.label_scale);
    let mut r = rng::stream(cfg.seed, &[u64::from_le_bytes(*b"adaptcli"), a.shots as u64]);
    let params = few_shot_adapt(&base.params, &support, &objective, &cfg.meta.adapt_loop(), &mut r)?;
    let dir = out_dir(&cfg)?;
    let path = dir.join("adapted.ckpt");
    save_checkpoint(
        &Checkpoint {
            config: cfg.clone(),
            params,
            ..base
        },
        &path,
    )?;
    println!("adapted on {} of {} support windows; wrote {}", a.shots, pool.len(), path.display());
    Ok(())
}

fn unit_table(f: &FewShotEval) -> String {
    let mut s = String::from("unit,zero_shot_rmse,adapted_rmse,zero_shot_r2,adapted_r2,n\n");
    for u in &f.units {
        s.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            u.unit, u.zero_shot.rmse, u.adapted.rmse, u.zero_shot.r2, u.adapted.r2, u.adapted.n
        ));
    }
    s
}

fn evaluate_cmd(e: &EvaluateArgs) -> Result<()> {
    let ck = load_checkpoint(&e.checkpoint)?;
    let mut cfg = resolve(&e.common, Some(ck.config.clone()))?;
    cfg.model = ck.config.model.clone();
    cfg.validate()?;
    let data = load_dataset(&cfg)?;
    if (data.label_scale - ck.label_scale).abs() > 1e-12 * ck.label_scale.abs() {
        bail!(
            "checkpoint label scale {} differs from the dataset's {}; evaluate on the dataset it was trained for",
            ck.label_scale,
            data.label_scale
        );
    }
    let shots = e.shots.unwrap_or(cfg.meta.shots);
    let objective = cfg.objective(ck.label_scale);
    let result = evaluate(&cfg, &data, &objective, &ck.params, shots)?;
    let dir = out_dir(&cfg)?;
    let formats: &[ReportFormat] = match e.format {
        FormatArg::Csv => &[ReportFormat::Csv],
        FormatArg::Json => &[ReportFormat::Json],
        FormatArg::Both => &[ReportFormat::Csv, ReportFormat::Json],
    };
    for &f in formats {
        emit_report(result.headline(), &dir.join(format!("report.{f}")), f)?;
    }
    let m = result.headline();
    match &result {
        Evaluation::LastPoint { eval, baseline } => {
            println!(
                "last point, {} units: RMSE {:.3}, MAE {:.3}, R2 {:.4}, SCORE {:.2} (mean-RUL baseline RMSE {:.3})",
                m.n, m.rmse, m.mae, m.r2, m.score, baseline.rmse
            );
            if !eval.skipped.is_empty() {
                println!("{} unit(s) without a full window were excluded", eval.skipped.len());
            }
        }
        Evaluation::FewShot(f) => {
            for &fmt in formats {
                emit_report(&f.zero_shot, &dir.join(format!("zero_shot.{fmt}")), fmt)?;
            }
            write_atomic(&dir.join("units.csv"), unit_table(f).as_bytes())?;
            println!(
                "{shots}-shot on {} units: RMSE {:.3} (0-shot {:.3}), R2 {:.4}, improved {}/{}",
                f.units.len(),
                m.rmse,
                f.zero_shot.rmse,
                m.r2,
                f.improved_units(),
                f.units.len()
            );
        }
    }
    Ok(())
}

fn ablate_cmd(c: &Common) -> Result<()> {
    let cfg = resolve(c, None)?;
    cfg.validate()?;
    let data = load_dataset(&cfg)?;
    let table = ablate(&cfg, &data)?;
    let dir = out_dir(&cfg)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write_atomic(&dir.join("ablation.csv"), &csv)?;
    for r in &table.rows {
        println!("{:>12}: RMSE {:.3}, SCORE {:.2}", r.variant.name, r.report.rmse, r.report.score);
    }
    Ok(())
}

fn synth(c: &Common) -> Result<()> {
    let mut cfg = resolve(c, None)?;
    if let Some(subset) = c.subset {
        let dir = out_dir(&cfg)?;
        let fixture = match subset {
            Subset::FD001 | Subset::FD003 => CmapssFixture::single_condition(subset),
            Subset::FD002 | Subset::FD004 => CmapssFixture::six_conditions(subset),
        };
        write_cmapss(dir, &synthetic_cmapss(&fixture, cfg.seed))?;
        println!("synthetic {subset} files written to {}", dir.display());
        return Ok(());
    }
    cfg.dataset.kind = DatasetKind::Synthetic;
    cfg.model.hsm.time_steps = cfg.dataset.fleet_window;
    cfg.model.hsm.input_features = cfg.dataset.fleet.features;
    cfg.validate()?;
    let dir = out_dir(&cfg)?;
    let units = synthesize_degradation_fleet(&cfg.dataset.fleet, cfg.seed)?;
    let mut fleet = String::from("unit,step,rul,latent");
    for f in 0..cfg.dataset.fleet.features {
        fleet.push_str(&format!(",f{f}"));
    }
    fleet.push('\n');
    for u in &units {
        for (t, row) in u.features.iter().enumerate() {
            fleet.push_str(&format!("{},{},{},{}", u.unit, t + 1, u.rul[t], u.latent[t]));
            for v in row {
                fleet.push_str(&format!(",{v}"));
            }
            fleet.push('\n');
        }
    }
    write_atomic(&dir.join("fleet.csv"), fleet.as_bytes())?;
    let data = load_dataset(&cfg)?;
    write_processed(dir, &data.to_processed(cfg.seed))?;
    write_cache_config(dir, &cfg)?;
    println!("{} synthetic units written to {}", units.len(), dir.display());
    Ok(())
}
