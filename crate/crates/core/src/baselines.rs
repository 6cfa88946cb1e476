//! Rasch (1PL), majority, and random comparators.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Response, SparseAnswerMatrix, StudentSplit};
use crate::error::{Error, Result};
use crate::math::{bernoulli_log_lik, sigmoid};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrtConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight `λ` of the `λ(‖θ‖² + ‖d‖²)` penalty.
    pub l2: f64,
}

impl Default for IrtConfig {
    fn default() -> Self {
        Self { epochs: 300, learning_rate: 0.05, l2: 1e-4 }
    }
}

impl IrtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("IRT epochs must be ≥ 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("IRT learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.l2 > 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid(format!("IRT penalty must be positive, got {}", self.l2)));
        }
        Ok(())
    }
}

/// Rasch model `P(correct) = sigmoid(θ_i + d_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrtParams {
    /// Ability of every student of the fitted matrix. Students outside the
    /// training split are fitted afterwards with the intercepts frozen.
    pub ability: Vec<f64>,
    /// Easiness intercept of every question.
    pub intercept: Vec<f64>,
    pub config: IrtConfig,
    /// Penalized mean log-likelihood of the training rows after each epoch.
    pub trace: Vec<f64>,
}

/// Number of consecutive loss increases treated as divergence.
const DIVERGENCE_RUN: usize = 5;
const DIVERGENCE_TOL: f64 = 1e-6;

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Adam ascent step on `x` along `g`.
    fn ascend(&mut self, x: &mut [f64], g: &[f64], lr: f64, t: i32) {
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for k in 0..x.len() {
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g[k];
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g[k] * g[k];
            x[k] += lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + eps);
        }
    }
}

/// Full-batch Adam on the penalized Rasch log-likelihood of the training
/// rows. Every other student then gets a post-hoc ability estimate from
/// their whole observed row.
pub fn fit_irt(matrix: &SparseAnswerMatrix, split: &StudentSplit, config: &IrtConfig) -> Result<IrtParams> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let (n, m) = (matrix.n_students(), matrix.n_questions());
    if let Some(&bad) = split.train.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("split refers to student {bad}, matrix has {n}")));
    }
    let n_obs: usize = split.train.iter().map(|&i| matrix.row(i).len()).sum();
    if n_obs == 0 {
        return Err(Error::invalid("training rows hold no observations"));
    }

    let mut theta = vec![0.0; split.train.len()];
    let mut intercept = vec![0.0; m];
    let mut opt_theta = Moments::new(theta.len());
    let mut opt_d = Moments::new(m);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut previous = f64::NEG_INFINITY;
    let mut increases = 0;
    for epoch in 0..config.epochs {
        let mut g_theta = vec![0.0; theta.len()];
        let mut g_d = vec![0.0; m];
        let mut ll = 0.0;
        for (k, &i) in split.train.iter().enumerate() {
            for r in matrix.row(i) {
                let logit = theta[k] + intercept[r.question];
                ll += bernoulli_log_lik(r.x(), logit);
                let resid = r.x() - sigmoid(logit);
                g_theta[k] += resid;
                g_d[r.question] += resid;
            }
        }
        let penalty = config.l2 * (theta.iter().map(|t| t * t).sum::<f64>() + intercept.iter().map(|d| d * d).sum::<f64>());
        let objective = (ll - penalty) / n_obs as f64;
        if !objective.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        // Momentum overshoot near the optimum moves the objective by far
        // less than this; a diverging fit does not.
        if objective < previous - DIVERGENCE_TOL * (1.0 + previous.abs()) {
            increases += 1;
            if increases >= DIVERGENCE_RUN {
                return Err(Error::Divergence { epoch, epochs: DIVERGENCE_RUN });
            }
        } else {
            increases = 0;
        }
        previous = objective;
        trace.push(objective);
        for (g, t) in g_theta.iter_mut().zip(&theta) {
            *g = (*g - 2.0 * config.l2 * t) / n_obs as f64;
        }
        for (g, d) in g_d.iter_mut().zip(&intercept) {
            *g = (*g - 2.0 * config.l2 * d) / n_obs as f64;
        }
        opt_theta.ascend(&mut theta, &g_theta, config.learning_rate, epoch as i32 + 1);
        opt_d.ascend(&mut intercept, &g_d, config.learning_rate, epoch as i32 + 1);
    }

    let mut ability: Vec<f64> = (0..n).into_par_iter().map(|i| fit_ability(&intercept, matrix.row(i), config.l2)).collect();
    for (k, &i) in split.train.iter().enumerate() {
        ability[i] = theta[k];
    }
    Ok(IrtParams { ability, intercept, config: config.clone(), trace })
}

/// Penalized maximum-likelihood ability for one student with the question
/// intercepts held fixed. The objective is strictly concave, so damped
/// Newton converges from 0.
pub fn fit_ability(intercept: &[f64], observed: &[Response], l2: f64) -> f64 {
    let objective = |t: f64| {
        observed.iter().map(|r| bernoulli_log_lik(r.x(), t + intercept[r.question])).sum::<f64>() - l2 * t * t
    };
    let mut theta = 0.0;
    let mut current = objective(theta);
    for _ in 0..100 {
        let (mut g, mut h) = (-2.0 * l2 * theta, -2.0 * l2);
        for r in observed {
            let p = sigmoid(theta + intercept[r.question]);
            g += r.x() - p;
            h -= p * (1.0 - p);
        }
        let mut step = -g / h;
        let mut next = theta + step;
        let mut value = objective(next);
        while value < current && step.abs() > 1e-12 {
            step *= 0.5;
            next = theta + step;
            value = objective(next);
        }
        if value < current {
            break;
        }
        theta = next;
        current = value;
        if step.abs() < 1e-10 {
            break;
        }
    }
    theta
}

pub fn irt_predict(params: &IrtParams, i: usize, j: usize) -> f64 {
    sigmoid(params.ability[i] + params.intercept[j])
}

/// Independent `U(0,1)` probability for every cell of an `n × m` matrix.
pub fn random_impute(n_students: usize, n_questions: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n_students)
        .map(|i| {
            let mut r = rng::sub(seed, rng::RANDOM, &[i as u64]);
            (0..n_questions).map(|_| r.random::<f64>()).collect()
        })
        .collect()
}

/// Majority answer of each question over the observed entries. Tied or
/// empty columns take the majority over all observed entries, and a tie
/// there resolves to 1.
pub fn majority_answers(matrix: &SparseAnswerMatrix) -> Vec<u8> {
    let counts = matrix.column_counts();
    let (total, correct) = counts.iter().fold((0, 0), |(t, c), &(n, k)| (t + n, c + k));
    let global = u8::from(2 * correct >= total);
    counts
        .iter()
        .map(|&(n, k)| match (2 * k).cmp(&n) {
            _ if n == 0 => global,
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => global,
        })
        .collect()
}

/// Fill every missing cell with its question's majority answer.
pub fn majority_impute(matrix: &SparseAnswerMatrix) -> Result<SparseAnswerMatrix> {
    let fill = majority_answers(matrix);
    let rows = matrix
        .rows()
        .iter()
        .map(|row| {
            let mut dense: Vec<Response> = fill.iter().enumerate().map(|(j, &v)| Response::new(j, v)).collect();
            for r in row {
                dense[r.question] = *r;
            }
            dense
        })
        .collect();
    SparseAnswerMatrix::new(matrix.student_ids().to_vec(), matrix.question_ids().to_vec(), rows)
}
