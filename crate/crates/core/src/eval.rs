//! Held-out imputation accuracy and MAE.

use rand::Rng;
use rayon::prelude::*;

use crate::baselines::{fit_ability, majority_answers, IrtParams};
use crate::data::{hold_out_targets, Response, SparseAnswerMatrix};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::pvae::PVae;
use crate::rng;

/// Anything that maps a conditioning set to correctness probabilities.
pub trait Predictor: Sync {
    fn name(&self) -> &str;

    /// `p(x_j = 1)` for each of `targets`, given the answers of `student`
    /// in `conditioning`. `seed` feeds any sampling the predictor does.
    fn predict(&self, student: usize, conditioning: &[Response], targets: &[usize], seed: u64) -> Result<Vec<f64>>;
}

pub struct PVaePredictor<'a> {
    pub model: &'a PVae,
    pub samples: usize,
}

impl Predictor for PVaePredictor<'_> {
    fn name(&self) -> &str {
        "pvae"
    }

    fn predict(&self, _student: usize, conditioning: &[Response], targets: &[usize], seed: u64) -> Result<Vec<f64>> {
        self.model.impute_subset(conditioning, targets, self.samples, seed)
    }
}

/// Rasch predictor: ability refit from the conditioning set against frozen
/// question intercepts.
pub struct IrtPredictor<'a> {
    pub params: &'a IrtParams,
}

impl Predictor for IrtPredictor<'_> {
    fn name(&self) -> &str {
        "irt"
    }

    fn predict(&self, _student: usize, conditioning: &[Response], targets: &[usize], _seed: u64) -> Result<Vec<f64>> {
        let d = &self.params.intercept;
        if let Some(j) = conditioning.iter().map(|r| r.question).chain(targets.iter().copied()).find(|&j| j >= d.len()) {
            return Err(Error::QuestionOutOfRange { index: j, count: d.len() });
        }
        let theta = fit_ability(d, conditioning, self.params.config.l2);
        Ok(targets.iter().map(|&j| sigmoid(theta + d[j])).collect())
    }
}

/// Uniform random probabilities.
pub struct RandomPredictor;

impl Predictor for RandomPredictor {
    fn name(&self) -> &str {
        "random"
    }

    fn predict(&self, _student: usize, _conditioning: &[Response], targets: &[usize], seed: u64) -> Result<Vec<f64>> {
        let mut r = rng::stream(seed, rng::RANDOM);
        Ok(targets.iter().map(|_| r.random::<f64>()).collect())
    }
}

/// Each question's majority answer, as a hard 0/1 prediction.
pub struct MajorityPredictor {
    pub answers: Vec<u8>,
}

impl MajorityPredictor {
    /// Majorities computed over the listed rows only.
    pub fn fit(matrix: &SparseAnswerMatrix, rows: &[usize]) -> Result<Self> {
        Ok(Self { answers: majority_answers(&matrix.select_students(rows)?) })
    }
}

impl Predictor for MajorityPredictor {
    fn name(&self) -> &str {
        "majority"
    }

    fn predict(&self, _student: usize, _conditioning: &[Response], targets: &[usize], _seed: u64) -> Result<Vec<f64>> {
        targets
            .iter()
            .map(|&j| {
                self.answers
                    .get(j)
                    .map(|&v| f64::from(v))
                    .ok_or(Error::QuestionOutOfRange { index: j, count: self.answers.len() })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImputationScores {
    /// Fraction of targets where `(p ≥ 0.5) == x`.
    pub accuracy: f64,
    /// Mean `|p − x|` over targets.
    pub mae: f64,
    pub n_targets: usize,
    pub n_students: usize,
    /// Students without any observed answer to hold out.
    pub skipped: usize,
}

/// Per student, a `conditioning_fraction` share of the observed row is
/// given to the predictor and the remainder is scored. Accuracy and MAE
/// are pooled over all targets.
pub fn evaluate_imputation<P: Predictor + ?Sized>(
    predictor: &P,
    matrix: &SparseAnswerMatrix,
    students: &[usize],
    conditioning_fraction: f64,
    seed: u64,
) -> Result<ImputationScores> {
    if !(conditioning_fraction > 0.0 && conditioning_fraction < 1.0) {
        return Err(Error::invalid(format!("conditioning fraction must lie in (0, 1), got {conditioning_fraction}")));
    }
    let per_student: Vec<Option<(usize, usize, f64)>> = students
        .par_iter()
        .map(|&i| {
            let row = matrix.row(i);
            if row.is_empty() {
                return Ok(None);
            }
            let (cond, targets) = hold_out_targets(row, 1.0 - conditioning_fraction, rng::derive(seed, &[rng::EVAL, i as u64]))?;
            let questions: Vec<usize> = targets.iter().map(|r| r.question).collect();
            let p = predictor.predict(i, &cond, &questions, rng::derive(seed, &[rng::IMPUTE, i as u64]))?;
            let mut hits = 0;
            let mut abs = 0.0;
            for (r, &p) in targets.iter().zip(&p) {
                hits += usize::from(u8::from(p >= 0.5) == r.value);
                abs += (p - r.x()).abs();
            }
            Ok(Some((targets.len(), hits, abs)))
        })
        .collect::<Result<_>>()?;

    let (mut n_targets, mut hits, mut abs, mut n_students, mut skipped) = (0, 0, 0.0, 0, 0);
    for s in per_student {
        match s {
            Some((t, h, a)) => {
                n_targets += t;
                hits += h;
                abs += a;
                n_students += 1;
            }
            None => skipped += 1,
        }
    }
    if n_targets == 0 {
        return Err(Error::invalid("no student has an answer to hold out"));
    }
    Ok(ImputationScores {
        accuracy: hits as f64 / n_targets as f64,
        mae: abs / n_targets as f64,
        n_targets,
        n_students,
        skipped,
    })
}
