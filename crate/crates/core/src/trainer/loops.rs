use std::collections::HashMap;

use rand::RngCore;

use super::data::{evaluate_uar, training_batches};
use super::schedule::{effective_lr, PlateauAction, PlateauController, RoundRobinSchedule};
use super::{DomainData, RunRecord, TrainConfig, TrainError, TrainEvent};
use crate::corpus::Batch;
use crate::model::{trainable_mask, ModelBundle, Regime, StepPlan, TrainableMask};
use crate::seed::{derive_seed, rng_for};
use crate::tensor_core::{sgd_momentum_step, softmax_xent};

type Velocity = HashMap<String, Vec<f32>>;

/// One forward/backward/update on `batch`; returns the mean loss.
#[allow(clippy::too_many_arguments)]
fn train_step(
    bundle: &mut ModelBundle<f32>,
    batch: &Batch,
    plan: &StepPlan,
    mask: &TrainableMask,
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
    rng: &mut impl RngCore,
) -> Result<f64, TrainError> {
    bundle.zero_grads();
    let domain = batch.domain_id.as_str();
    let (logits, trace) = bundle.forward_train(domain, &batch.features, &batch.lengths, plan, rng)?;
    let (loss, grad) = softmax_xent(&logits, &batch.labels)?;
    bundle.backward(&trace, &grad, plan.grads)?;
    for (info, t) in bundle.params_mut() {
        if !mask.contains(&info.name) {
            continue;
        }
        let (p, g) = t.data_and_grad_mut();
        let Some(g) = g else { continue };
        let v = velocity.entry(info.name).or_insert_with(|| vec![0.0; p.len()]);
        sgd_momentum_step(p, g, v, lr as f32, momentum as f32, 0.0)?;
    }
    bundle.zero_grads();
    Ok(loss as f64)
}

fn check_domain(bundle: &ModelBundle<f32>, data: &DomainData) -> Result<(), TrainError> {
    let n = bundle.domain(&data.id)?.n_classes;
    if n != data.n_classes {
        return Err(TrainError::Config(format!(
            "domain {:?} has {n} classes in the model but {} in the data",
            data.id, data.n_classes
        )));
    }
    data.check(true)
}

/// Single-task training of `data.id` under `regime` with the plateau
/// schedule. Ends on the best dev epoch's weights.
pub fn train_single(
    bundle: &mut ModelBundle<f32>,
    data: &DomainData,
    regime: Regime,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<RunRecord, TrainError> {
    cfg.validate()?;
    if regime == Regime::SharedMultidomain {
        return Err(TrainError::Config("shared_multidomain needs train_multidomain".into()));
    }
    check_domain(bundle, data)?;
    let id = data.id.as_str();
    let mask = trainable_mask(bundle, regime, id)?;
    let plan = regime.step_plan();
    let stages = cfg.stages_for(regime);
    let shuffle_label = format!("shuffle:{id}");
    let dropout_label = format!("dropout:{id}");

    let mut ctl = PlateauController::new(cfg.patience_epochs, stages.len());
    let mut best = bundle.clone();
    let mut velocity = Velocity::new();
    let mut t: u64 = 0;
    let mut trace = Vec::new();
    let mut stage_starts = Vec::new();
    for epoch in 0.. {
        if cfg.max_epochs.is_some_and(|m| epoch >= m) {
            break;
        }
        let stage = ctl.stage();
        let batches = training_batches(&data.train, cfg.batch_size, &mut rng_for(cfg.seed, &shuffle_label, epoch as u64), id)?;
        for batch in &batches {
            let lr = effective_lr(stages[stage], cfg.per_update_decay, t);
            let mut rng = rng_for(cfg.seed, &dropout_label, t);
            let loss = train_step(bundle, batch, &plan, &mask, &mut velocity, lr, cfg.momentum, &mut rng)?;
            observer(&TrainEvent::Update {
                domain: id.to_string(),
                step: t,
                stage,
                lr,
                loss,
            });
            t += 1;
        }
        let dev_uar = evaluate_uar(bundle, id, &data.dev, cfg.batch_size)?;
        trace.push(dev_uar);
        observer(&TrainEvent::Epoch {
            domain: id.to_string(),
            epoch,
            stage,
            dev_uar,
        });
        let (improved, action) = ctl.observe(epoch, dev_uar);
        if improved {
            best = bundle.clone();
        }
        match action {
            PlateauAction::Continue => {}
            PlateauAction::StepLr => {
                *bundle = best.clone();
                velocity.clear();
                stage_starts.push(epoch + 1);
                observer(&TrainEvent::StageChange {
                    domain: id.to_string(),
                    epoch,
                    stage: ctl.stage(),
                    restored_epoch: ctl.best().map(|b| b.0),
                });
            }
            PlateauAction::Stop => break,
        }
    }
    *bundle = best;
    let (best_epoch, final_dev_uar) = ctl.best().expect("at least one epoch ran");
    let final_test_uar = evaluate_uar(bundle, id, &data.test, cfg.batch_size)?;
    Ok(RunRecord {
        regime: regime.as_str().to_string(),
        corpus_ids: vec![data.id.clone()],
        seed: cfg.seed,
        dev_uar_trace: trace,
        best_epoch: Some(best_epoch),
        final_dev_uar,
        final_test_uar,
        updates: t,
        stage_starts,
        checkpoint: None,
    })
}

/// Registers `data.id` afresh (zero adapters, new batch norms and head) on
/// the existing shared backbone, then tunes adapters and head.
pub fn transfer_from(
    bundle: &mut ModelBundle<f32>,
    data: &DomainData,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<RunRecord, TrainError> {
    bundle.reinitialize_domain(&data.id, data.n_classes, derive_seed(cfg.seed, "transfer", 0))?;
    train_single(bundle, data, Regime::AdaptersAndHead, cfg, observer)
}

/// Copies `source`'s domain-specific backbone to `data.id`, gives it a new
/// head and trains only that head.
pub fn transfer_head_only(
    bundle: &mut ModelBundle<f32>,
    source: &str,
    data: &DomainData,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<RunRecord, TrainError> {
    if source != data.id {
        bundle.fork_domain(source, &data.id, data.n_classes, derive_seed(cfg.seed, "transfer", 0))?;
    }
    train_single(bundle, data, Regime::HeadOnly, cfg, observer)
}

/// Endless shuffled batch stream over one domain's training set.
struct BatchStream<'a> {
    data: &'a DomainData,
    label: String,
    epoch: u64,
    batches: Vec<Batch>,
    pos: usize,
}

impl<'a> BatchStream<'a> {
    fn new(data: &'a DomainData) -> Self {
        Self {
            data,
            label: format!("shuffle:{}", data.id),
            epoch: 0,
            batches: Vec::new(),
            pos: 0,
        }
    }

    fn next(&mut self, cfg: &TrainConfig) -> Result<&Batch, TrainError> {
        if self.pos == self.batches.len() {
            if !self.batches.is_empty() {
                self.epoch += 1;
            }
            let mut rng = rng_for(cfg.seed, &self.label, self.epoch);
            self.batches = training_batches(&self.data.train, cfg.batch_size, &mut rng, &self.data.id)?;
            self.pos = 0;
        }
        self.pos += 1;
        Ok(&self.batches[self.pos - 1])
    }
}

/// Round-robin training: each round takes one batch from every domain in
/// order, each updating the shared convolutions plus that domain's own
/// parameters. Stages have a fixed number of rounds; one round is one
/// schedule step. Returns one record per domain, from the final weights.
pub fn train_multidomain(
    bundle: &mut ModelBundle<f32>,
    domains: &[DomainData],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<Vec<RunRecord>, TrainError> {
    cfg.validate()?;
    if domains.len() < 2 {
        return Err(TrainError::TooFewCorpora(domains.len()));
    }
    let mut masks = Vec::with_capacity(domains.len());
    for d in domains {
        check_domain(bundle, d)?;
        masks.push(trainable_mask(bundle, Regime::SharedMultidomain, &d.id)?);
    }
    let plan = Regime::SharedMultidomain.step_plan();
    let schedule = RoundRobinSchedule {
        stages: cfg.lr_stages.clone(),
        steps_per_stage: cfg.round_robin_steps_per_stage,
    };
    let dropout_labels: Vec<String> = domains.iter().map(|d| format!("dropout:{}", d.id)).collect();
    let mut streams: Vec<BatchStream> = domains.iter().map(BatchStream::new).collect();
    let mut velocity = Velocity::new();
    let mut traces = vec![Vec::new(); domains.len()];
    let mut stage_starts = Vec::new();

    let total = schedule.total_rounds();
    for round in 0..total {
        let stage = schedule.stage_of(round).expect("round < total");
        if round > 0 && round % schedule.steps_per_stage == 0 {
            stage_starts.push(round);
            observer(&TrainEvent::StageChange {
                domain: String::new(),
                epoch: round,
                stage,
                restored_epoch: None,
            });
        }
        let lr = schedule.lr(round, cfg.per_update_decay).expect("round < total");
        for (d, stream) in streams.iter_mut().enumerate() {
            let batch = stream.next(cfg)?;
            let mut rng = rng_for(cfg.seed, &dropout_labels[d], round as u64);
            let loss = train_step(bundle, batch, &plan, &masks[d], &mut velocity, lr, cfg.momentum, &mut rng)?;
            observer(&TrainEvent::Update {
                domain: domains[d].id.clone(),
                step: round as u64,
                stage,
                lr,
                loss,
            });
        }
        if (round + 1) % cfg.multidomain_eval_every == 0 {
            for (d, data) in domains.iter().enumerate() {
                let dev_uar = evaluate_uar(bundle, &data.id, &data.dev, cfg.batch_size)?;
                traces[d].push(dev_uar);
                observer(&TrainEvent::RoundEval {
                    round: round + 1,
                    domain: data.id.clone(),
                    dev_uar,
                });
            }
        }
    }

    let mut records = Vec::with_capacity(domains.len());
    for (data, trace) in domains.iter().zip(traces) {
        let final_dev_uar = match trace.last() {
            Some(&v) if total % cfg.multidomain_eval_every == 0 => v,
            _ => evaluate_uar(bundle, &data.id, &data.dev, cfg.batch_size)?,
        };
        records.push(RunRecord {
            regime: Regime::SharedMultidomain.as_str().to_string(),
            corpus_ids: vec![data.id.clone()],
            seed: cfg.seed,
            dev_uar_trace: trace,
            best_epoch: None,
            final_dev_uar,
            final_test_uar: evaluate_uar(bundle, &data.id, &data.test, cfg.batch_size)?,
            updates: total as u64,
            stage_starts: stage_starts.clone(),
            checkpoint: None,
        });
    }
    Ok(records)
}
