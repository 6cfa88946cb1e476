use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{Response, SparseAnswerMatrix};
use crate::error::{Error, Result};
use crate::math::{gaussian_kl, DiagGaussian};
use crate::pvae::PVae;
use crate::rng;

/// Samples per question used by [`quality_report`] at most.
pub const DEFAULT_QUALITY_SAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    /// Mean KL from the prior to the single-answer posterior.
    pub reward: f64,
    /// Number of sampled answers.
    pub samples: usize,
}

/// Mean of `KL[q(z | {x_ij}) ‖ N(0, I)]` over `samples` answers drawn from
/// the observed answers to question `j`, without replacement when there are
/// enough of them.
pub fn quality(model: &PVae, matrix: &SparseAnswerMatrix, j: usize, samples: usize, seed: u64) -> Result<QualityScore> {
    if j >= model.n_questions() || j >= matrix.n_questions() {
        return Err(Error::QuestionOutOfRange { index: j, count: matrix.n_questions().min(model.n_questions()) });
    }
    if samples == 0 {
        return Err(Error::invalid("quality needs at least one sample"));
    }
    let column = matrix.column(j);
    if column.is_empty() {
        return Err(Error::NoObservations(j));
    }
    let mut r = rng::sub(seed, rng::QUALITY, &[j as u64]);
    let picked: Vec<u8> = if samples <= column.len() {
        index::sample(&mut r, column.len(), samples).into_iter().map(|k| column[k].1).collect()
    } else {
        (0..samples).map(|_| column[r.random_range(0..column.len())].1).collect()
    };
    let prior = DiagGaussian::standard(model.dims().latent);
    let kl = |v: u8| -> Result<f64> { gaussian_kl(&model.encode(&[Response::new(j, v)])?, &prior) };
    let (kl0, kl1) = (kl(0)?, kl(1)?);
    let total: f64 = picked.iter().map(|&v| if v == 1 { kl1 } else { kl0 }).sum();
    Ok(QualityScore { reward: total / samples as f64, samples })
}

/// Entropy in nats of the observed correctness rate of question `j`.
pub fn entropy_baseline(matrix: &SparseAnswerMatrix, j: usize) -> Result<f64> {
    if j >= matrix.n_questions() {
        return Err(Error::QuestionOutOfRange { index: j, count: matrix.n_questions() });
    }
    let (n, k) = matrix.column_counts()[j];
    if n == 0 {
        return Err(Error::NoObservations(j));
    }
    Ok(binary_entropy(k as f64 / n as f64))
}

pub fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    h(p) + h(1.0 - p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub question_ids: Vec<String>,
    pub reward: Vec<f64>,
    pub entropy: Vec<f64>,
    pub samples: Vec<usize>,
}

impl QualityReport {
    /// `question_id  R  entropy  S`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "question_id\tR\tentropy\tS")?;
        for j in 0..self.reward.len() {
            writeln!(w, "{}\t{}\t{}\t{}", self.question_ids[j], self.reward[j], self.entropy[j], self.samples[j])?;
        }
        Ok(())
    }
}

/// Quality and entropy of every question with at least one observed
/// answer, using `S = min(count, max_samples)` samples per question.
pub fn quality_report(model: &PVae, matrix: &SparseAnswerMatrix, max_samples: usize, seed: u64) -> Result<QualityReport> {
    if model.n_questions() != matrix.n_questions() {
        return Err(Error::DimensionMismatch { expected: model.n_questions(), found: matrix.n_questions() });
    }
    let counts = matrix.column_counts();
    let kept: Vec<usize> = (0..matrix.n_questions()).filter(|&j| counts[j].0 > 0).collect();
    for j in (0..matrix.n_questions()).filter(|&j| counts[j].0 == 0) {
        log::warn!("question `{}` has no observed answers and is left out", matrix.question_ids()[j]);
    }
    let scores: Vec<(QualityScore, f64)> = kept
        .par_iter()
        .map(|&j| Ok((quality(model, matrix, j, counts[j].0.min(max_samples), seed)?, entropy_baseline(matrix, j)?)))
        .collect::<Result<_>>()?;
    Ok(QualityReport {
        question_ids: kept.iter().map(|&j| matrix.question_ids()[j].clone()).collect(),
        reward: scores.iter().map(|s| s.0.reward).collect(),
        entropy: scores.iter().map(|s| s.1).collect(),
        samples: scores.iter().map(|s| s.0.samples).collect(),
    })
}
