use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::early_stopping::{Decision, EarlyStopping};
use super::loss::half_mse_on_tape;
use super::rmsprop::{rmsprop_step, OptimizerState, RmsPropConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::graphdata::{DatasetSplit, NeighborView, RatingGraph, SocialGraph};
use crate::model::{forward_batch, AblationConfig, GraphRecParams, Mode, ModelShape};
use crate::scalar::Scalar;
use crate::seeds::{rng_for, Purpose};

/// Gaussian initialization under the `Init` stream of `seed`.
pub fn init_params<T: Scalar>(shape: ModelShape, seed: u64) -> Result<GraphRecParams<T>> {
    GraphRecParams::init(shape, &mut rng_for(seed, Purpose::Init))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
    pub val_mae: f64,
    pub wall_seconds: f64,
    /// Whether this epoch became the retained best.
    pub is_best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters of the epoch with the lowest validation RMSE.
    pub params: GraphRecParams<T>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub history: Vec<HistoryRow>,
    pub stopped_early: bool,
}

pub fn write_history_csv<W: Write>(mut w: W, history: &[HistoryRow]) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_rmse,val_mae,wall_seconds,is_best")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{:.3},{}",
            r.epoch, r.train_loss, r.val_rmse, r.val_mae, r.wall_seconds, r.is_best as u8
        )?;
    }
    Ok(())
}

/// Epoch-level driver. Owns the training graph, parameters, optimizer state
/// and the random streams for shuffling, neighbor sampling and dropout.
pub struct Trainer<'s, T: Scalar> {
    train_graph: RatingGraph,
    social: &'s SocialGraph,
    config: TrainConfig,
    ablation: AblationConfig,
    params: GraphRecParams<T>,
    state: OptimizerState<T>,
    order: Vec<(u32, u32, u8)>,
    shuffle_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    epoch: usize,
}

impl<'s, T: Scalar> Trainer<'s, T> {
    pub fn new(
        train_graph: RatingGraph,
        social: &'s SocialGraph,
        config: TrainConfig,
        ablation: AblationConfig,
    ) -> Result<Self> {
        config.validate()?;
        if train_graph.is_empty() {
            return Err(Error::Contract("training split is empty".into()));
        }
        let shape = ModelShape {
            mlp_layers: config.mlp_layers,
            ..ModelShape::new(train_graph.n_users(), train_graph.n_items(), train_graph.r_max(), config.embed_dim)
        };
        let params = init_params(shape, config.seed)?;
        Self::with_params(train_graph, social, config, ablation, params)
    }

    pub fn with_params(
        train_graph: RatingGraph,
        social: &'s SocialGraph,
        config: TrainConfig,
        ablation: AblationConfig,
        params: GraphRecParams<T>,
    ) -> Result<Self> {
        config.validate()?;
        let state = OptimizerState::for_shapes(params.tensors());
        let order = train_graph.triples().iter().map(|t| (t.user, t.item, t.rating)).collect();
        Ok(Self {
            shuffle_rng: rng_for(config.seed, Purpose::Shuffle),
            sample_rng: rng_for(config.seed, Purpose::Sampling),
            dropout_rng: rng_for(config.seed, Purpose::Dropout),
            train_graph,
            social,
            config,
            ablation,
            params,
            state,
            order,
            epoch: 0,
        })
    }

    pub fn params(&self) -> &GraphRecParams<T> {
        &self.params
    }

    pub fn into_params(self) -> GraphRecParams<T> {
        self.params
    }

    pub fn train_graph(&self) -> &RatingGraph {
        &self.train_graph
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// One shuffled pass over the training ratings. Returns the mean
    /// per-rating half squared error seen during the pass.
    pub fn run_epoch(&mut self) -> Result<f64> {
        self.epoch += 1;
        let epoch = self.epoch;
        self.order.shuffle(&mut self.shuffle_rng);
        let view = NeighborView::sampled(
            &self.train_graph,
            self.social,
            self.config.neighbor_cap,
            &mut self.sample_rng,
        );
        let opt = RmsPropConfig {
            learning_rate: self.config.learning_rate,
            decay: self.config.rmsprop_decay,
            epsilon: self.config.rmsprop_epsilon,
        };
        let mut total = 0.0;
        for (b, chunk) in self.order.chunks(self.config.batch_size).enumerate() {
            let pairs: Vec<(u32, u32)> = chunk.iter().map(|&(u, i, _)| (u, i)).collect();
            let truths: Vec<T> = chunk.iter().map(|&(_, _, r)| T::from_count(r as usize)).collect();
            let grads = {
                let mode = Mode::Train {
                    dropout: self.config.dropout,
                    rng: &mut self.dropout_rng,
                };
                let mut fwd = forward_batch(&self.params, &view, &pairs, self.ablation, mode)?;
                let preds = fwd.prediction_var();
                let loss = half_mse_on_tape(fwd.tape_mut(), preds, &truths)?;
                let value = fwd.tape().value(loss).get(0, 0).to_f64_lossy();
                if !value.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        batch: b + 1,
                        loss: value,
                    });
                }
                total += value * chunk.len() as f64;
                fwd.gradients(loss)?
            };
            rmsprop_step(&mut self.params.tensors_mut(), &grads, &mut self.state, opt)?;
        }
        if !self.params.all_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: self.order.len().div_ceil(self.config.batch_size),
                loss: f64::NAN,
            });
        }
        Ok(total / self.order.len() as f64)
    }

    /// Options that reproduce the validation metrics computed during training.
    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions::for_training(&self.config, self.ablation)
    }
}

/// Trains on `split.train`, selects the epoch with the lowest validation RMSE
/// and returns its parameters together with the full history.
pub fn train<T: Scalar>(
    graph: &RatingGraph,
    social: &SocialGraph,
    split: &DatasetSplit,
    config: &TrainConfig,
    ablation: AblationConfig,
) -> Result<TrainOutcome<T>> {
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(Error::Contract("train and validation splits must be non-empty".into()));
    }
    let train_graph = graph.restricted_to(&split.train)?;
    let mut trainer = Trainer::<T>::new(train_graph, social, config.clone(), ablation)?;
    let opts = trainer.eval_options();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best: Option<GraphRecParams<T>> = None;
    let mut stopped_early = false;
    let start = Instant::now();
    for _ in 0..config.max_epochs {
        let train_loss = trainer.run_epoch()?;
        let epoch = trainer.epochs_run();
        let report = evaluate(trainer.params(), trainer.train_graph(), social, &split.validation, &opts)?;
        let decision = stopper.observe(epoch, report.rmse);
        let is_best = decision == Decision::Improved;
        if is_best {
            best = Some(trainer.params().clone());
        }
        history.push(HistoryRow {
            epoch,
            train_loss,
            val_rmse: report.rmse,
            val_mae: report.mae,
            wall_seconds: start.elapsed().as_secs_f64(),
            is_best,
        });
        if decision == Decision::Stop {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        params: best.unwrap_or_else(|| trainer.into_params()),
        best_epoch: stopper.best_epoch().unwrap_or(0),
        best_val_rmse: stopper.best_value().unwrap_or(f64::NAN),
        history,
        stopped_early,
    })
}
