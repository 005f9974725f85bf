//! Adam training loop with per-batch triplet sampling, validation-driven
//! early stopping and the λ-zeroing ablation protocol.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, Decoding, MetricsReport};
use crate::model::{grad_total_loss, Batch, JobMatrix, LossBreakdown, LossWeights, ModelParams};
use crate::taxonomy::Taxonomy;
use crate::triplet::{sample_batch, PerRelation, Relation, TripletStores};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub n_sample: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            learning_rate: 1e-3,
            batch_size: 4,
            max_epochs: 100,
            patience: 3,
            n_sample: 64,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("adam betas must be in [0, 1), got {} / {}", self.beta1, self.beta2));
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be > 0, got {}", self.adam_eps));
        }
        if self.batch_size == 0 || self.patience == 0 || self.n_sample == 0 {
            return bad("batch_size, patience and n_sample must be >= 1".into());
        }
        Ok(())
    }
}

/// Adam moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: ModelParams,
    pub second: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(like: &ModelParams) -> Self {
        Self {
            first: like.zeros_like(),
            second: like.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of a flat parameter slice. `step` is the
/// 1-based index of this update.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    theta: &mut [f64],
    first: &mut [f64],
    second: &mut [f64],
    grad: &[f64],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let c1 = 1.0 - beta1.powf(step as f64);
    let c2 = 1.0 - beta2.powf(step as f64);
    for (((t, m), v), &g) in theta.iter_mut().zip(first).zip(second).zip(grad) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *t -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one Adam step to every parameter block. A non-finite gradient
/// aborts before anything is modified.
pub fn adam_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    grads: &ModelParams,
    config: &TrainConfig,
) -> Result<()> {
    for (g, p) in grads.blocks().iter().zip(params.blocks()) {
        if g.dim() != p.dim() {
            return Err(Error::Dimension {
                expected: p.len(),
                got: g.len(),
            });
        }
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient block {name}")));
    }
    adam.step += 1;
    let step = adam.step;
    let blocks = params
        .blocks_mut()
        .into_iter()
        .zip(adam.first.blocks_mut())
        .zip(adam.second.blocks_mut())
        .zip(grads.blocks());
    for (((theta, m), v), g) in blocks {
        adam_update(
            theta.as_slice_mut().expect("standard layout"),
            m.as_slice_mut().expect("standard layout"),
            v.as_slice_mut().expect("standard layout"),
            g.as_slice().expect("standard layout"),
            step,
            config.learning_rate,
            config.beta1,
            config.beta2,
            config.adam_eps,
        );
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    /// Best validation Carotene accuracy so far (`-inf` before the first epoch).
    pub best_metric: f64,
    /// Epoch (1-based) that produced `best_metric`; 0 before training.
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        let adam = AdamState::new(&params);
        Self {
            params,
            adam,
            best_metric: f64::NEG_INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch breakdowns.
    pub train_loss: LossBreakdown,
    pub validation: MetricsReport,
    pub best_val_carotene_accuracy: f64,
    pub wall_time_secs: f64,
}

/// Everything [`train`] needs besides the initial parameters.
pub struct TrainData<'a> {
    pub jobs: &'a JobMatrix,
    pub train_rows: &'a [usize],
    pub val_rows: &'a [usize],
    pub taxonomy: &'a Taxonomy,
    /// Triplets sampled for the margin terms.
    pub stores: &'a TripletStores,
    /// Triplets scored for validation TRA.
    pub val_stores: &'a TripletStores,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State captured at the best validation epoch (the initial state if no
    /// epoch ran).
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
}

fn check_data(data: &TrainData<'_>, config: &TrainConfig) -> Result<()> {
    if data.train_rows.is_empty() || data.val_rows.is_empty() {
        return Err(Error::Config("train and validation splits must be non-empty".into()));
    }
    for r in Relation::ALL {
        if config.weights.relation(r) > 0.0 && data.stores[r].is_none() {
            return Err(Error::Config(format!(
                "no {r} triplet store but lambda{} > 0",
                3 + r.slot()
            )));
        }
    }
    Ok(())
}

/// Runs Adam over shuffled mini-batches until `max_epochs` or until the
/// validation Carotene accuracy has not improved for `patience` epochs.
/// Returns the state from the best epoch (earliest on ties).
pub fn train(data: &TrainData<'_>, init: ModelParams, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_data(data, config)?;
    let mut state = TrainState::new(init, config.seed);
    let mut best = state.clone();
    let mut history = Vec::new();
    let mut order = data.train_rows.to_vec();
    let start = Instant::now();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut state.rng);
        let mut losses = Vec::with_capacity(order.len().div_ceil(config.batch_size));
        for chunk in order.chunks(config.batch_size) {
            let rng = &mut state.rng;
            let triplets = PerRelation::from_fn(|r| match &data.stores[r] {
                Some(store) if !store.is_empty() => sample_batch(store, config.n_sample, rng),
                _ => Vec::new(),
            });
            let batch = Batch {
                jobs: chunk.to_vec(),
                triplets,
            };
            let (loss, grads) = grad_total_loss(&state.params, data.jobs, &batch, &config.weights)?;
            if !loss.total.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}: {loss:?}")));
            }
            adam_step(&mut state.params, &mut state.adam, &grads, config)?;
            losses.push(loss);
        }
        if let Some(name) = state.params.first_non_finite() {
            return Err(Error::NonFinite(format!("parameter block {name} after epoch {epoch}")));
        }

        let validation = evaluate(
            &state.params,
            data.jobs,
            data.val_rows,
            data.taxonomy,
            data.val_stores,
            Decoding::Unconstrained,
        )?;
        let metric = validation.carotene_accuracy;
        if metric > state.best_metric {
            state.best_metric = metric;
            state.best_epoch = epoch;
            state.epochs_since_improvement = 0;
            best = state.clone();
        } else {
            state.epochs_since_improvement += 1;
        }
        log::info!(
            "epoch {epoch}: loss {:.5} val soc {:.4} car {:.4}",
            LossBreakdown::mean(&losses).total,
            validation.soc_accuracy,
            validation.carotene_accuracy
        );
        history.push(EpochRecord {
            epoch,
            train_loss: LossBreakdown::mean(&losses),
            validation,
            best_val_carotene_accuracy: state.best_metric,
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
        if state.epochs_since_improvement >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        state: best,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    /// `full`, or `-lambdaK` for the run with λK zeroed.
    pub label: String,
    pub weights: LossWeights,
    pub epochs: usize,
    pub metrics: MetricsReport,
}

/// Trains the base config and one variant per entry of `zero_lambdas`
/// (1-based λ indices) with that weight set to 0, all from the same initial
/// parameters, and evaluates each on `eval_rows` and `eval_stores`.
pub fn run_ablation(
    base: &TrainConfig,
    data: &TrainData<'_>,
    init: &ModelParams,
    eval_rows: &[usize],
    eval_stores: &TripletStores,
    zero_lambdas: &[usize],
) -> Result<Vec<AblationRow>> {
    for &k in zero_lambdas {
        if !(1..=6).contains(&k) {
            return Err(Error::Config(format!("no lambda{k}; expected 1..=6")));
        }
    }
    let variants = std::iter::once(("full".to_string(), *base)).chain(zero_lambdas.iter().map(|&k| {
        let mut cfg = *base;
        cfg.weights.lambdas[k - 1] = 0.0;
        (format!("-lambda{k}"), cfg)
    }));
    variants
        .map(|(label, cfg)| {
            let outcome = train(data, init.clone(), &cfg)?;
            let metrics = evaluate(
                &outcome.state.params,
                data.jobs,
                eval_rows,
                data.taxonomy,
                eval_stores,
                Decoding::Unconstrained,
            )?;
            Ok(AblationRow {
                label,
                weights: cfg.weights,
                epochs: outcome.history.len(),
                metrics,
            })
        })
        .collect()
}
