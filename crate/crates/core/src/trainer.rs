//! Training loop: shuffled mini-batches, per-sample tapes run on worker
//! threads with deterministic gradient merging, global-norm clipping, Adam,
//! validation after every epoch, and best-checkpoint tracking.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use nrnf_tensor::rng::{self, stage};
use nrnf_tensor::tape::Tape;
use nrnf_tensor::{clip_global_norm, AdamConfig, AdamState, GradAccumulator, Scalar};

use crate::config::RunConfig;
use crate::eval::evaluate_split;
use crate::metrics::MetricsRecord;
use crate::model::{sample_loss, ModelConfig, NewsCache, NrnfModel};
use crate::pipeline::{draw_negatives, split_history, Dataset};
use crate::{CoreError, Result};

/// One line of the per-epoch training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_mrr: f64,
    pub val_ndcg5: f64,
    pub val_ndcg10: f64,
    pub w_p: f64,
    pub w_n: f64,
    pub wall_seconds: f64,
}

pub struct TrainOutcome<S: Scalar> {
    pub model: NrnfModel<S>,
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: MetricsRecord,
}

/// The dwell threshold the model trains and evaluates with. The basic
/// variant ignores negative feedback: every click routes to the positive
/// view, which is exactly a zero threshold.
pub fn effective_threshold(cfg: &RunConfig) -> f64 {
    if cfg.model.negative_view {
        cfg.data.threshold_seconds
    } else {
        0.0
    }
}

struct WorkerOutput<S: Scalar> {
    grads: GradAccumulator<S>,
    losses: Vec<f64>,
    error: Option<CoreError>,
}

/// Trains a fresh model on the dataset per the run configuration.
pub fn train<S: Scalar>(ds: &Dataset, cfg: &RunConfig) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if ds.train.is_empty() {
        return Err(CoreError::Size("empty training split".into()));
    }
    let model_cfg = ModelConfig::from_run(cfg, ds.vocab.size());
    let mut model: NrnfModel<S> = NrnfModel::new(model_cfg, cfg.train.seed);
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig { learning_rate: cfg.train.learning_rate, ..Default::default() },
    );
    let threshold = effective_threshold(cfg);

    let mut logs = Vec::new();
    let mut best: Option<(usize, MetricsRecord, Vec<Vec<S>>)> = None;
    let mut epochs_since_best = 0usize;

    for epoch in 0..cfg.train.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..ds.train.len()).collect();
        let mut shuffle_rng = rng::stream(cfg.train.seed, &[stage::SHUFFLE, epoch as u64]);
        shuffle(&mut order, &mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch_id, batch) in order.chunks(cfg.train.batch_size).enumerate() {
            let batch_loss =
                batch_step(&mut model, &mut adam, ds, batch, epoch, threshold, cfg).map_err(
                    |e| match e {
                        CoreError::Numeric(msg) => {
                            CoreError::Numeric(format!("batch {batch_id}: {msg}"))
                        }
                        other => other,
                    },
                )?;
            loss_sum += batch_loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;

        let val = if ds.val.is_empty() {
            MetricsRecord::default()
        } else {
            evaluate_split(&model, ds, &ds.val, threshold, cfg.train.threads)?
        };
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_auc: val.auc,
            val_mrr: val.mrr,
            val_ndcg5: val.ndcg5,
            val_ndcg10: val.ndcg10,
            w_p: model.w_p(),
            w_n: model.w_n(),
            wall_seconds: started.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().is_none_or(|(_, b, _)| val.auc > b.auc);
        if improved {
            let snapshot = if cfg.train.patience > 0 {
                model.params.iter().map(|p| p.tensor.data.clone()).collect()
            } else {
                Vec::new()
            };
            best = Some((epoch, val, snapshot));
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if cfg.train.patience > 0 && epochs_since_best >= cfg.train.patience {
                break;
            }
        }
    }

    // With early stopping enabled the best validation checkpoint wins;
    // patience 0 runs every epoch and keeps the final parameters.
    let (best_epoch, best_val, snapshot) = best.expect("at least one epoch ran");
    if cfg.train.patience > 0 {
        for (p, data) in model.params.iter_mut().zip(snapshot) {
            p.tensor.data = data;
        }
    }
    Ok(TrainOutcome { model, logs, best_epoch, best_val })
}

fn batch_step<S: Scalar>(
    model: &mut NrnfModel<S>,
    adam: &mut AdamState<S>,
    ds: &Dataset,
    batch: &[usize],
    epoch: usize,
    threshold: f64,
    cfg: &RunConfig,
) -> Result<f64> {
    let (total, loss_sum) = forward_backward_batch(&*model, ds, batch, epoch, threshold, cfg)?;
    let scale = S::from_f64(1.0 / batch.len() as f64);
    total.apply(&mut model.params, scale);
    clip_global_norm(&mut model.params, cfg.train.grad_clip);
    adam.step(&mut model.params)?;
    Ok(loss_sum / batch.len() as f64)
}

fn forward_backward_batch<S: Scalar>(
    model: &NrnfModel<S>,
    ds: &Dataset,
    batch: &[usize],
    epoch: usize,
    threshold: f64,
    cfg: &RunConfig,
) -> Result<(GradAccumulator<S>, f64)> {
    let threads = cfg.train.threads.min(batch.len()).max(1);
    let chunk = batch.len().div_ceil(threads);
    let seed = cfg.train.seed;
    let redraw = cfg.train.redraw_negatives_per_epoch;
    let q = ds.config.neg_ratio;

    let mut outputs: Vec<WorkerOutput<S>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for slice in batch.chunks(chunk) {
            handles.push(scope.spawn(move || {
                let mut out = WorkerOutput {
                    grads: GradAccumulator::new(&model.params),
                    losses: Vec::with_capacity(slice.len()),
                    error: None,
                };
                for &sample_idx in slice {
                    let sample = &ds.train[sample_idx];
                    let negatives = if redraw {
                        draw_negatives(
                            &sample.pool,
                            q,
                            &mut rng::stream(
                                seed,
                                &[stage::NEGATIVE_SAMPLING, epoch as u64, sample_idx as u64],
                            ),
                        )
                    } else {
                        sample.negatives.clone()
                    };
                    let history = split_history(
                        &ds.histories[sample.impression],
                        threshold,
                        model.cfg.pos_cap,
                        model.cfg.neg_cap,
                    );
                    let mut dropout_rng =
                        rng::stream(seed, &[stage::DROPOUT, epoch as u64, sample_idx as u64]);
                    let mut tape = Tape::new(&model.params, true, false);
                    let mut cache = NewsCache::new();
                    let loss = match sample_loss(
                        &mut tape,
                        model,
                        &ds.news,
                        &history,
                        sample.positive,
                        &negatives,
                        &mut cache,
                        &mut dropout_rng,
                    ) {
                        Ok(l) => l,
                        Err(e) => {
                            out.error = Some(e.into());
                            return out;
                        }
                    };
                    let value = tape.scalar_value(loss).to_f64();
                    if !value.is_finite() {
                        out.error = Some(CoreError::Numeric(format!(
                            "non-finite loss at sample {sample_idx}"
                        )));
                        return out;
                    }
                    out.losses.push(value);
                    if let Err(e) = tape.backward(loss) {
                        out.error = Some(e.into());
                        return out;
                    }
                    tape.drain_grads_into(&mut out.grads);
                }
                out
            }));
        }
        outputs = handles.into_iter().map(|h| h.join().expect("worker panic")).collect();
    });

    let mut total = GradAccumulator::new(&model.params);
    let mut loss_sum = 0.0;
    for out in &mut outputs {
        if let Some(e) = out.error.take() {
            return Err(e);
        }
        total.merge(&out.grads);
        loss_sum += out.losses.iter().sum::<f64>();
    }
    Ok((total, loss_sum))
}

/// Fisher-Yates with a seeded stream.
fn shuffle<T, R: rand::Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
