//! Synthetic 2PL item-response ground truth and observation simulators.
//!
//! Abilities `θ_i ~ N(0,1)`, difficulties `b_j ~ N(0,1)` and discriminations
//! `a_j ~ LogNormal(0, 0.25)`; answers are Bernoulli with
//! `P(correct) = sigmoid(a_j (θ_i − b_j))`. The observation mask is either
//! independent of the truth (MCAR) or concentrated where ability matches
//! difficulty, which confounds observed-only difficulty estimates.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;

use crate::data::{Response, SparseAnswerMatrix};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::rng;

pub const DISCRIMINATION_LOG_SCALE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct IrtGroundTruth {
    pub theta: Vec<f64>,
    pub difficulty: Vec<f64>,
    pub discrimination: Vec<f64>,
    pub seed: u64,
}

impl IrtGroundTruth {
    pub fn n_students(&self) -> usize {
        self.theta.len()
    }

    pub fn n_questions(&self) -> usize {
        self.difficulty.len()
    }

    pub fn probability(&self, i: usize, j: usize) -> f64 {
        answer_probability(self.theta[i], self.discrimination[j], self.difficulty[j])
    }

    /// `question_id  a  b` with a header row; ids are question indices.
    pub fn write_question_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "question_id\ta\tb")?;
        for (j, (a, b)) in self.discrimination.iter().zip(&self.difficulty).enumerate() {
            writeln!(w, "{j}\t{a}\t{b}")?;
        }
        Ok(())
    }

    /// `student_id  theta` with a header row.
    pub fn write_student_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "student_id\ttheta")?;
        for (i, t) in self.theta.iter().enumerate() {
            writeln!(w, "{i}\t{t}")?;
        }
        Ok(())
    }
}

/// One row of a question-truth TSV.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionTruth {
    pub question_id: String,
    pub discrimination: f64,
    pub difficulty: f64,
}

pub fn read_question_tsv<R: BufRead>(r: R) -> Result<Vec<QuestionTruth>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| Error::Parse { line: n + 1, message: m.into() };
        let mut f = line.split('\t');
        let id = f.next().ok_or_else(|| err("missing id"))?;
        let a = f.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad a"))?;
        let b = f.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad b"))?;
        out.push(QuestionTruth { question_id: id.to_string(), discrimination: a, difficulty: b });
    }
    Ok(out)
}

pub fn generate_ground_truth(n_students: usize, n_questions: usize, seed: u64) -> Result<IrtGroundTruth> {
    if n_students < 2 || n_questions < 2 {
        return Err(Error::invalid("ground truth needs at least 2 students and 2 questions"));
    }
    let mut r = rng::stream(seed, rng::TRUTH);
    let theta = (0..n_students).map(|_| StandardNormal.sample(&mut r)).collect();
    let difficulty = (0..n_questions).map(|_| StandardNormal.sample(&mut r)).collect();
    let lognormal = LogNormal::new(0.0, DISCRIMINATION_LOG_SCALE).expect("valid lognormal");
    let discrimination = (0..n_questions).map(|_| lognormal.sample(&mut r)).collect();
    Ok(IrtGroundTruth { theta, difficulty, discrimination, seed })
}

/// 2PL response probability `sigmoid(a (θ − b))`.
pub fn answer_probability(theta: f64, discrimination: f64, difficulty: f64) -> f64 {
    sigmoid(discrimination * (theta - difficulty))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationModel {
    /// Each cell observed independently with probability `density`.
    Mcar { density: f64 },
    /// Observation probability proportional to
    /// `exp(−(θ_i − b_j)² / (2 bandwidth²))`, scaled so the expected
    /// density over the whole matrix is `density` (capped at 1 per cell).
    AbilityBiased { density: f64, bandwidth: f64 },
}

impl ObservationModel {
    pub fn density(&self) -> f64 {
        match *self {
            ObservationModel::Mcar { density } | ObservationModel::AbilityBiased { density, .. } => density,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rho = self.density();
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::invalid(format!("density must lie in (0, 1], got {rho}")));
        }
        if let ObservationModel::AbilityBiased { bandwidth, .. } = *self {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
            }
        }
        Ok(())
    }
}

/// Simulated dataset: the observed matrix, its mask, and the full latent
/// answer matrix the observations were taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub matrix: SparseAnswerMatrix,
    pub mask: Vec<Vec<bool>>,
    pub complete: Vec<Vec<u8>>,
}

pub fn sample_answers(truth: &IrtGroundTruth, obs: &ObservationModel, seed: u64) -> Result<SyntheticSample> {
    obs.validate()?;
    let (n, m) = (truth.n_students(), truth.n_questions());
    let kernel = |i: usize, j: usize, bw: f64| {
        let d = truth.theta[i] - truth.difficulty[j];
        (-d * d / (2.0 * bw * bw)).exp()
    };
    let scale = match *obs {
        ObservationModel::Mcar { density } => density,
        ObservationModel::AbilityBiased { density, bandwidth } => {
            let total: f64 = (0..n)
                .into_par_iter()
                .map(|i| (0..m).map(|j| kernel(i, j, bandwidth)).sum::<f64>())
                .collect::<Vec<_>>()
                .iter()
                .sum();
            density * (n * m) as f64 / total
        }
    };

    let per_student: Vec<(Vec<bool>, Vec<u8>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut obs_rng = rng::sub(seed, rng::OBSERVE, &[i as u64]);
            let mut ans_rng = rng::sub(seed, rng::ANSWER, &[i as u64]);
            let mut mask = Vec::with_capacity(m);
            let mut answers = Vec::with_capacity(m);
            for j in 0..m {
                let p_obs = match *obs {
                    ObservationModel::Mcar { .. } => scale,
                    ObservationModel::AbilityBiased { bandwidth, .. } => (scale * kernel(i, j, bandwidth)).min(1.0),
                };
                let u: f64 = obs_rng.random();
                mask.push(u < p_obs);
                let v: f64 = ans_rng.random();
                answers.push(u8::from(v < truth.probability(i, j)));
            }
            (mask, answers)
        })
        .collect();

    let (mask, complete): (Vec<_>, Vec<_>) = per_student.into_iter().unzip();
    let rows = mask
        .iter()
        .zip(&complete)
        .map(|(mk, ans)| {
            (0..m).filter(|&j| mk[j]).map(|j| Response::new(j, ans[j])).collect::<Vec<_>>()
        })
        .collect();
    let matrix = SparseAnswerMatrix::with_numeric_ids(m, rows)?;
    Ok(SyntheticSample { matrix, mask, complete })
}
