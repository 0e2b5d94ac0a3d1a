use std::io::Write;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, MetaTask, SampleWindow};
use crate::error::{Error, Result};
use crate::meta::adam::{AdamConfig, AdamState};
use crate::meta::adapt::{inner_adapt, sample_indices, InnerLoop};
use crate::meta::loss::Objective;
use crate::meta::update::meta_update;
use crate::nn::ParameterSet;
use crate::rng::{self, TAG_INNER, TAG_SAMPLE, TAG_SPLIT, TAG_VALID};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub inner_lr: f64,
    pub inner_steps: usize,
    pub inner_batch_size: usize,
    pub meta_batch_size: usize,
    pub outer_rate: f64,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub shots: usize,
    pub adapt_steps: usize,
    /// Step size when adapting to a new task; the inner rate when unset.
    pub adapt_lr: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Hard cap on meta-iterations, for reduced-budget runs.
    pub max_iterations: Option<usize>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_lr: 0.001,
            inner_steps: 8,
            inner_batch_size: 64,
            meta_batch_size: 5,
            outer_rate: 0.1,
            epochs: 50,
            validation_fraction: 0.1,
            shots: 15,
            adapt_steps: 8,
            adapt_lr: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_iterations: None,
        }
    }
}

impl MetaConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, field: &str, msg: String| {
            if !ok {
                out.push(format!("meta.{field}: {msg}"));
            }
        };
        need(
            self.inner_lr.is_finite() && self.inner_lr > 0.0,
            "inner_lr",
            format!("{} must be > 0", self.inner_lr),
        );
        need(self.inner_steps >= 1, "inner_steps", "must be >= 1".into());
        need(self.inner_batch_size >= 1, "inner_batch_size", "must be >= 1".into());
        need(self.meta_batch_size >= 1, "meta_batch_size", "must be >= 1".into());
        need(
            self.outer_rate.is_finite() && self.outer_rate > 0.0,
            "outer_rate",
            format!("{} must be > 0", self.outer_rate),
        );
        need(self.epochs >= 1, "epochs", "must be >= 1".into());
        need(
            (0.0..1.0).contains(&self.validation_fraction),
            "validation_fraction",
            format!("{} must lie in [0, 1)", self.validation_fraction),
        );
        need(self.shots >= 1, "shots", "must be >= 1".into());
        if let Some(lr) = self.adapt_lr {
            need(lr.is_finite() && lr > 0.0, "adapt_lr", format!("{lr} must be > 0"));
        }
        need(
            (0.0..1.0).contains(&self.beta1),
            "beta1",
            format!("{} must lie in [0, 1)", self.beta1),
        );
        need(
            (0.0..1.0).contains(&self.beta2),
            "beta2",
            format!("{} must lie in [0, 1)", self.beta2),
        );
        need(
            self.adam_eps.is_finite() && self.adam_eps > 0.0,
            "adam_eps",
            format!("{} must be > 0", self.adam_eps),
        );
        out
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.inner_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn inner_loop(&self) -> InnerLoop {
        InnerLoop {
            adam: self.adam(),
            steps: self.inner_steps,
            batch_size: self.inner_batch_size,
        }
    }

    /// The loop used to adapt to a new task's support set.
    pub fn adapt_loop(&self) -> InnerLoop {
        let mut adam = self.adam();
        adam.lr = self.adapt_lr.unwrap_or(self.inner_lr);
        InnerLoop {
            adam,
            steps: self.adapt_steps,
            batch_size: self.inner_batch_size,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub train_loss: f64,
    /// Present on the last iteration of each epoch.
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    /// Loss history as CSV. Wall time is left out so that equal seeds give
    /// byte-identical files.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "epoch", "train_loss", "val_loss"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.epoch.to_string(),
                format!("{:e}", r.train_loss),
                r.val_loss.map(|v| format!("{v:e}")).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("training log", e))?;
        Ok(())
    }

    /// The loss columns only, as raw bits. Two runs with the same seed give
    /// equal fingerprints; wall time is excluded.
    pub fn loss_bits(&self) -> Vec<(u64, Option<u64>)> {
        self.records
            .iter()
            .map(|r| (r.train_loss.to_bits(), r.val_loss.map(f64::to_bits)))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss (or the final ones when
    /// there is no validation split).
    pub best: ParameterSet,
    pub last: ParameterSet,
    pub best_iteration: usize,
    pub initial_val_loss: Option<f64>,
    pub best_val_loss: Option<f64>,
    pub validation_tasks: Vec<usize>,
    pub log: TrainingLog,
}

/// Hold out `fraction` of the tasks (rounded, at least one when the
/// fraction is positive and enough tasks exist) for validation.
pub fn split_validation(
    tasks: &[MetaTask],
    fraction: f64,
    seed: u64,
) -> (Vec<&MetaTask>, Vec<&MetaTask>) {
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(&mut rng::stream(seed, &[TAG_SPLIT, u64::MAX]));
    let mut n_val = (tasks.len() as f64 * fraction).round() as usize;
    if fraction > 0.0 && n_val == 0 && tasks.len() > 1 {
        n_val = 1;
    }
    let (val, train) = order.split_at(n_val.min(tasks.len()));
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (
        train.iter().map(|&i| &tasks[i]).collect(),
        val.iter().map(|&i| &tasks[i]).collect(),
    )
}

/// Eval-mode total loss on at most `limit` windows of `windows`.
fn query_loss(
    objective: &Objective,
    params: &ParameterSet,
    windows: &[SampleWindow],
    limit: usize,
) -> Result<f64> {
    let take = windows.len().min(limit.max(1));
    let step = windows.len() as f64 / take as f64;
    let batch = Batch::new((0..take).map(|i| &windows[(i as f64 * step) as usize]))?;
    Ok(objective.evaluate(params, &batch)?.total)
}

/// Mean post-adaptation query loss over `tasks`. Every task uses the same
/// random stream on every call, so successive calls are comparable.
pub fn validation_loss(
    phi: &ParameterSet,
    tasks: &[&MetaTask],
    objective: &Objective,
    inner: &InnerLoop,
    seed: u64,
) -> Result<f64> {
    let losses: Vec<f64> = tasks
        .par_iter()
        .map(|task| {
            let mut r = rng::stream(seed, &[TAG_VALID, task.id as u64]);
            let theta = inner_adapt(phi, &task.support, objective, inner, &mut r)?.params;
            query_loss(objective, &theta, &task.query, usize::MAX)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn finite_or_diverged(value: f64, iteration: usize, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged {
            iteration,
            msg: format!("{what} is {value}"),
        })
    }
}

fn diverged(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Diverged {
            iteration,
            msg: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Tracks the best parameters by validation loss.
struct Selector<'a> {
    val_tasks: Vec<&'a MetaTask>,
    objective: &'a Objective,
    inner: InnerLoop,
    seed: u64,
    best: ParameterSet,
    best_loss: Option<f64>,
    best_iteration: usize,
    initial: Option<f64>,
}

impl<'a> Selector<'a> {
    fn new(
        val_tasks: Vec<&'a MetaTask>,
        objective: &'a Objective,
        inner: InnerLoop,
        seed: u64,
        init: &ParameterSet,
    ) -> Result<Self> {
        let mut s = Self {
            val_tasks,
            objective,
            inner,
            seed,
            best: init.clone(),
            best_loss: None,
            best_iteration: 0,
            initial: None,
        };
        s.initial = s.measure(init, 0)?;
        s.best_loss = s.initial;
        Ok(s)
    }

    fn measure(&self, params: &ParameterSet, iteration: usize) -> Result<Option<f64>> {
        if self.val_tasks.is_empty() {
            return Ok(None);
        }
        let v = validation_loss(params, &self.val_tasks, self.objective, &self.inner, self.seed)
            .map_err(diverged(iteration))?;
        finite_or_diverged(v, iteration, "validation loss").map(Some)
    }

    fn observe(&mut self, params: &ParameterSet, iteration: usize) -> Result<Option<f64>> {
        let v = self.measure(params, iteration)?;
        if let (Some(v), Some(best)) = (v, self.best_loss) {
            if v < best {
                self.best = params.clone();
                self.best_loss = Some(v);
                self.best_iteration = iteration;
            }
        }
        Ok(v)
    }

    fn finish(self, last: ParameterSet, log: TrainingLog, iterations: usize) -> TrainOutcome {
        let has_val = !self.val_tasks.is_empty();
        TrainOutcome {
            best: if has_val { self.best } else { last.clone() },
            best_iteration: if has_val { self.best_iteration } else { iterations },
            last,
            initial_val_loss: self.initial,
            best_val_loss: self.best_loss,
            validation_tasks: self.val_tasks.iter().map(|t| t.id).collect(),
            log,
        }
    }
}

/// First-order meta-training. Each iteration samples `B` training tasks,
/// adapts a copy of `Φ` to every task's support set in parallel, and moves
/// `Φ` toward the adapted parameters. One epoch is `⌈#train tasks / B⌉`
/// iterations; validation runs at the end of every epoch.
pub fn meta_train(
    tasks: &[MetaTask],
    objective: &Objective,
    cfg: &MetaConfig,
    init: ParameterSet,
    seed: u64,
) -> Result<TrainOutcome> {
    let b = cfg.meta_batch_size;
    if b == 0 {
        return Err(Error::Config("meta.meta_batch_size: must be >= 1".into()));
    }
    let (train, val) = split_validation(tasks, cfg.validation_fraction, seed);
    if train.len() < b {
        return Err(Error::Invalid(format!(
            "{} training task(s) available, meta-batch needs {b}",
            train.len()
        )));
    }
    if let Some(t) = tasks.iter().find(|t| t.support.is_empty() || t.query.is_empty()) {
        return Err(Error::Invalid(format!("task {} has an empty support or query set", t.id)));
    }
    let inner = cfg.inner_loop();
    let per_epoch = train.len().div_ceil(b);
    let total = (cfg.epochs * per_epoch).min(cfg.max_iterations.unwrap_or(usize::MAX));

    let mut selector = Selector::new(val, objective, inner, seed, &init)?;
    let mut sampler = rng::stream(seed, &[TAG_SAMPLE]);
    let mut phi = init;
    let mut log = TrainingLog::default();
    let start = Instant::now();

    for it in 0..total {
        let picked: Vec<&MetaTask> = index::sample(&mut sampler, train.len(), b)
            .into_iter()
            .map(|i| train[i])
            .collect();
        let results: Vec<(ParameterSet, f64)> = picked
            .par_iter()
            .enumerate()
            .map(|(p, task)| {
                let mut r = rng::stream(seed, &[TAG_INNER, it as u64, p as u64]);
                let theta = inner_adapt(&phi, &task.support, objective, &inner, &mut r)?.params;
                let q = query_loss(objective, &theta, &task.query, inner.batch_size)?;
                Ok((theta, q))
            })
            .collect::<Result<_>>()
            .map_err(diverged(it))?;
        let train_loss = results.iter().map(|r| r.1).sum::<f64>() / b as f64;
        finite_or_diverged(train_loss, it, "training loss")?;
        let adapted: Vec<ParameterSet> = results.into_iter().map(|r| r.0).collect();
        phi = meta_update(&phi, &adapted, cfg.outer_rate)?;
        if !phi.flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                msg: "meta-parameters became non-finite".into(),
            });
        }

        let epoch_end = (it + 1) % per_epoch == 0 || it + 1 == total;
        let val_loss = if epoch_end {
            selector.observe(&phi, it + 1)?
        } else {
            None
        };
        log.records.push(LogRecord {
            iteration: it,
            epoch: it / per_epoch,
            train_loss,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!("iteration {it}: train {train_loss:.6e} val {val_loss:?}");
    }
    if total == 0 {
        log.records.push(LogRecord {
            iteration: 0,
            epoch: 0,
            train_loss: f64::NAN,
            val_loss: selector.initial,
            seconds: 0.0,
        });
    }
    Ok(selector.finish(phi, log, total))
}

/// Conventional training on the pooled windows of all training tasks, with
/// the same validation protocol as [`meta_train`]. One epoch is one pass
/// over the pool in mini-batches of `inner_batch_size`.
pub fn joint_train(
    tasks: &[MetaTask],
    objective: &Objective,
    cfg: &MetaConfig,
    init: ParameterSet,
    seed: u64,
) -> Result<TrainOutcome> {
    let (train, val) = split_validation(tasks, cfg.validation_fraction, seed);
    let pool: Vec<&SampleWindow> = train.iter().flat_map(|t| t.support.iter().chain(&t.query)).collect();
    if pool.is_empty() {
        return Err(Error::Empty("training pool"));
    }
    let inner = cfg.inner_loop();
    let per_epoch = pool.len().div_ceil(cfg.inner_batch_size);
    let total = (cfg.epochs * per_epoch).min(cfg.max_iterations.unwrap_or(usize::MAX));

    let mut selector = Selector::new(val, objective, inner, seed, &init)?;
    let mut r = rng::stream(seed, &[TAG_SAMPLE]);
    let mut phi = init;
    let mut adam = AdamState::new(cfg.adam(), &phi);
    let mut log = TrainingLog::default();
    let start = Instant::now();

    for it in 0..total {
        let idx = sample_indices(pool.len(), cfg.inner_batch_size, &mut r);
        let batch = Batch::new(idx.iter().map(|&i| pool[i]))?;
        let (values, grads) = objective
            .loss_and_grad(&phi, &batch, Some(&mut r))
            .map_err(diverged(it))?;
        let train_loss = finite_or_diverged(values.total, it, "training loss")?;
        adam.step(&mut phi, &grads)?;

        let epoch_end = (it + 1) % per_epoch == 0 || it + 1 == total;
        let val_loss = if epoch_end {
            selector.observe(&phi, it + 1)?
        } else {
            None
        };
        log.records.push(LogRecord {
            iteration: it,
            epoch: it / per_epoch,
            train_loss,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(selector.finish(phi, log, total))
}
