use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{record_batch, BatchRow};
use super::model::PVae;
use super::params::{ModelDims, PVaeParams, Slot};
use crate::data::{Response, SparseAnswerMatrix, StudentSplit};
use crate::error::{Error, Result};
use crate::math::{AdamConfig, AdamState, Tape};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub embedding_dim: usize,
    pub pointwise_dim: usize,
    pub hidden_dim: usize,
    /// Per row and epoch, a fraction drawn uniformly from this range of the
    /// observed answers is hidden from the encoder (the likelihood still
    /// scores all of them).
    pub dropout: (f64, f64),
    /// Reparameterized samples per ELBO evaluation.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 128,
            latent_dim: 20,
            embedding_dim: 16,
            pointwise_dim: 32,
            hidden_dim: 64,
            dropout: (0.0, 0.7),
            mc_samples: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be ≥ 1"));
        }
        if self.batch_size == 0 || self.mc_samples == 0 {
            return Err(Error::invalid("batch size and MC samples must be ≥ 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        let (lo, hi) = self.dropout;
        if !(0.0..1.0).contains(&lo) || !(0.0..1.0).contains(&hi) || lo > hi {
            return Err(Error::invalid(format!("dropout range must lie within [0, 1), got {:?}", self.dropout)));
        }
        Ok(())
    }

    pub fn dims(&self, questions: usize) -> ModelDims {
        ModelDims {
            questions,
            embedding: self.embedding_dim,
            pointwise: self.pointwise_dim,
            latent: self.latent_dim,
            hidden: self.hidden_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-student partial ELBO over the epoch's minibatches.
    pub train_elbo: f64,
    /// Mean per-student partial ELBO on validation rows, full conditioning.
    pub validation_elbo: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PVae,
    pub trace: Vec<EpochStats>,
}

fn standard_normals<R: Rng>(r: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| StandardNormal.sample(r)).collect()
}

/// Hide a uniformly drawn fraction of `row` from the encoder.
fn drop_conditioning<R: Rng>(row: &[Response], range: (f64, f64), r: &mut R) -> Vec<Response> {
    let u = if range.1 > range.0 { r.random_range(range.0..range.1) } else { range.0 };
    let n = row.len();
    let drop = ((u * n as f64).round() as usize).min(n);
    if drop == 0 {
        return row.to_vec();
    }
    let mut hidden = vec![false; n];
    for k in index::sample(r, n, drop) {
        hidden[k] = true;
    }
    row.iter().zip(hidden).filter(|(_, h)| !h).map(|(x, _)| *x).collect()
}

/// Mean partial ELBO of the listed rows with full conditioning.
pub fn mean_elbo(model: &PVae, matrix: &SparseAnswerMatrix, rows: &[usize], samples: usize, seed: u64) -> Result<f64> {
    if rows.is_empty() {
        return Ok(f64::NAN);
    }
    let k = model.dims().latent;
    let values: Vec<f64> = rows
        .par_iter()
        .map(|&i| {
            let mut r = rng::sub(seed, rng::VALIDATION, &[i as u64]);
            let noise: Vec<Vec<f64>> = (0..samples).map(|_| standard_normals(&mut r, k)).collect();
            model.partial_elbo(matrix.row(i), &noise)
        })
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / rows.len() as f64)
}

/// Minibatch Adam on the partial ELBO of the training rows.
pub fn train(matrix: &SparseAnswerMatrix, split: &StudentSplit, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if let Some(&bad) = split.train.iter().chain(&split.validation).find(|&&i| i >= matrix.n_students()) {
        return Err(Error::invalid(format!("split refers to student {bad}, matrix has {}", matrix.n_students())));
    }
    let dims = config.dims(matrix.n_questions());
    let mut params = PVaeParams::init(dims, config.seed)?;
    params.init_question_biases(matrix, &split.train)?;
    let mut adam = AdamState::new(
        AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() },
        params.tensors(),
    );

    let mut trace = Vec::with_capacity(config.epochs);
    let mut order = split.train.clone();
    for epoch in 0..config.epochs {
        let mut r = rng::sub(config.seed, rng::EPOCH, &[epoch as u64]);
        order.shuffle(&mut r);
        let mut elbo_total = 0.0;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let rows: Vec<BatchRow> = chunk
                .iter()
                .map(|&i| {
                    let row = matrix.row(i);
                    BatchRow {
                        encoder_input: drop_conditioning(row, config.dropout, &mut r),
                        likelihood: row.to_vec(),
                        noise: (0..config.mc_samples).map(|_| standard_normals(&mut r, dims.latent)).collect(),
                    }
                })
                .collect();
            let mut tape = Tape::new();
            let graph = record_batch(&mut tape, &params, &rows);
            let elbo = tape.scalar(graph.elbo_sum);
            if !elbo.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_no });
            }
            elbo_total += elbo;
            let grads = tape.backward(graph.loss)?;
            params.zero_grad();
            for slot in Slot::ALL {
                if let Some(g) = grads.param(slot as usize) {
                    params.get_mut(slot).accumulate_grad(g);
                }
            }
            adam.step(params.named_mut())?;
        }
        let model = PVae::new(params.clone());
        let validation_elbo = mean_elbo(&model, matrix, &split.validation, 1, rng::derive(config.seed, &[epoch as u64]))?;
        let stats = EpochStats { epoch: epoch + 1, train_elbo: elbo_total / order.len() as f64, validation_elbo };
        log::info!(
            "epoch {:>3}: train ELBO {:.4}, validation ELBO {:.4}",
            stats.epoch,
            stats.train_elbo,
            stats.validation_elbo
        );
        trace.push(stats);
    }
    params.zero_grad();
    Ok(TrainOutcome { model: PVae::new(params), trace })
}
