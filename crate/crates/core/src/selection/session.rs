use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;

use super::reward::{argmax_reward, RewardContext, DEFAULT_REWARD_SAMPLES};
use crate::data::Response;
use crate::error::{Error, Result};
use crate::eval::Predictor;
use crate::pvae::{FeatureCache, PVae};
use crate::rng;

/// Source of the answer a student gives to a chosen question.
pub trait AnswerOracle: Sync {
    fn answer(&self, question: usize) -> Option<u8>;
}

/// Replays a logged row; questions the student never answered have no
/// answer.
pub struct ReplayOracle<'a> {
    pub row: &'a [Response],
}

impl AnswerOracle for ReplayOracle<'_> {
    fn answer(&self, question: usize) -> Option<u8> {
        self.row.binary_search_by_key(&question, |r| r.question).ok().map(|k| self.row[k].value)
    }
}

/// Answers every question from a complete answer vector.
pub struct DenseOracle<'a> {
    pub answers: &'a [u8],
}

impl AnswerOracle for DenseOracle<'_> {
    fn answer(&self, question: usize) -> Option<u8> {
        self.answers.get(question).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidatePool {
    /// Every question outside the conditioning, chosen, and target sets. A
    /// choice the oracle cannot answer is dropped and the step reselects.
    All,
    /// As `All`, restricted upfront to questions the oracle can answer.
    Answerable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub steps: usize,
    /// Posterior draws behind the predictive probability of each reward.
    pub reward_samples: usize,
    pub pool: CandidatePool,
    pub seed: u64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            reward_samples: DEFAULT_REWARD_SAMPLES,
            pool: CandidatePool::Answerable,
            seed: 0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.reward_samples == 0 {
            return Err(Error::invalid("steps and reward samples must be ≥ 1"));
        }
        Ok(())
    }
}

/// One student's selection history.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSession {
    pub student: usize,
    /// Revealed answers in the order they were revealed.
    pub observed: Vec<Response>,
    /// Questions chosen for this student, in order.
    pub chosen: Vec<usize>,
    /// Reward of each choice at the time it was made (NaN for strategies
    /// that do not score candidates).
    pub rewards: Vec<f64>,
    pub targets: Vec<Response>,
    /// Target MAE after each step.
    pub mae: Vec<f64>,
    /// Set when the candidate pool ran dry before `steps` choices.
    pub exhausted: bool,
}

impl SelectionSession {
    pub fn new(student: usize, targets: Vec<Response>) -> Self {
        Self { student, observed: Vec::new(), chosen: Vec::new(), rewards: Vec::new(), targets, mae: Vec::new(), exhausted: false }
    }

    /// Whether `j` may still be chosen for this student.
    fn open(&self, j: usize) -> bool {
        !self.chosen.contains(&j) && !self.targets.iter().any(|t| t.question == j) && !self.observed.iter().any(|r| r.question == j)
    }

    fn candidates(&self, m: usize, oracle: &dyn AnswerOracle, pool: CandidatePool, rejected: &[usize]) -> Vec<usize> {
        (0..m)
            .filter(|&j| self.open(j) && !rejected.contains(&j))
            .filter(|&j| pool == CandidatePool::All || oracle.answer(j).is_some())
            .collect()
    }

    fn reveal(&mut self, j: usize, value: u8, reward: f64) {
        self.chosen.push(j);
        self.observed.push(Response::new(j, value));
        self.rewards.push(reward);
    }

    fn record_mae(&mut self, imputer: &dyn Predictor, seed: u64) -> Result<()> {
        let mae = if self.targets.is_empty() {
            f64::NAN
        } else {
            let questions: Vec<usize> = self.targets.iter().map(|t| t.question).collect();
            let p = imputer.predict(self.student, &self.observed, &questions, seed)?;
            self.targets.iter().zip(p).map(|(t, p)| (p - t.x()).abs()).sum::<f64>() / self.targets.len() as f64
        };
        self.mae.push(mae);
        Ok(())
    }

    /// `step  question_id  revealed_value  reward  target_mae`.
    pub fn write_tsv<W: Write>(&self, question_ids: &[String], mut w: W) -> Result<()> {
        writeln!(w, "step\tquestion_id\trevealed_value\treward\ttarget_mae")?;
        for (k, r) in self.observed.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", k + 1, question_ids[r.question], r.value, self.rewards[k], self.mae[k])?;
        }
        Ok(())
    }
}

fn reward_seed(config: &StrategyConfig, student: usize, step: usize) -> u64 {
    rng::derive(config.seed, &[rng::REWARD, student as u64, step as u64])
}

fn impute_seed(config: &StrategyConfig, student: usize, step: usize) -> u64 {
    rng::derive(config.seed, &[rng::IMPUTE, student as u64, step as u64])
}

fn check_targets(model: &PVae, targets: &[Response]) -> Result<()> {
    model.check_conditioning(targets)
}

/// Greedy personalized selection: each step asks the open question with
/// the highest information reward given the answers revealed so far.
/// `imputer` scores the targets after every step.
pub fn run_session(
    model: &PVae,
    cache: &FeatureCache,
    imputer: &dyn Predictor,
    student: usize,
    oracle: &dyn AnswerOracle,
    targets: Vec<Response>,
    config: &StrategyConfig,
) -> Result<SelectionSession> {
    config.validate()?;
    check_targets(model, &targets)?;
    let m = model.n_questions();
    let mut session = SelectionSession::new(student, targets);
    let mut rejected = Vec::new();
    for step in 0..config.steps {
        let ctx = RewardContext::new(model, cache, &session.observed, config.reward_samples, reward_seed(config, student, step))?;
        let mut scored: Vec<(usize, f64)> = session
            .candidates(m, oracle, config.pool, &rejected)
            .into_iter()
            .map(|j| Ok((j, ctx.reward(j)?)))
            .collect::<Result<_>>()?;
        let picked = loop {
            let Some((j, r)) = argmax_reward(&scored) else { break None };
            match oracle.answer(j) {
                Some(v) => break Some((j, v, r)),
                None => {
                    rejected.push(j);
                    scored.retain(|c| c.0 != j);
                }
            }
        };
        let Some((j, v, r)) = picked else {
            session.exhausted = true;
            break;
        };
        session.reveal(j, v, r);
        session.record_mae(imputer, impute_seed(config, student, step))?;
    }
    Ok(session)
}

/// Up to `steps` distinct candidates drawn uniformly without replacement;
/// the flag reports a pool smaller than `steps`.
pub fn rand_strategy(candidates: &[usize], steps: usize, seed: u64) -> (Vec<usize>, bool) {
    let k = steps.min(candidates.len());
    let picked = index::sample(&mut rng::stream(seed, rng::RANDOM), candidates.len(), k).into_iter().map(|i| candidates[i]).collect();
    (picked, k < steps)
}

/// Reveal a fixed question sequence in order, recording target MAE after
/// each answer. Questions the oracle cannot answer are skipped.
pub fn replay_sequence(
    model: &PVae,
    imputer: &dyn Predictor,
    student: usize,
    oracle: &dyn AnswerOracle,
    targets: Vec<Response>,
    sequence: &[usize],
    config: &StrategyConfig,
) -> Result<SelectionSession> {
    check_targets(model, &targets)?;
    let mut session = SelectionSession::new(student, targets);
    for &j in sequence {
        if !session.open(j) {
            return Err(Error::invalid(format!("question {j} is a target or was already asked")));
        }
        let Some(v) = oracle.answer(j) else { continue };
        let step = session.chosen.len();
        session.reveal(j, v, f64::NAN);
        session.record_mae(imputer, impute_seed(config, student, step))?;
    }
    session.exhausted = session.chosen.len() < config.steps;
    Ok(session)
}

/// A student taking part in a shared (non-personalized) sequence.
pub struct Participant<'a> {
    pub student: usize,
    pub oracle: &'a dyn AnswerOracle,
    pub targets: Vec<Response>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedSequence {
    pub sequence: Vec<usize>,
    /// Population-mean reward of each choice.
    pub rewards: Vec<f64>,
    pub sessions: Vec<SelectionSession>,
    pub exhausted: bool,
}

/// One question sequence for the whole population. A candidate's reward is
/// the mean information reward over the students who can still take it,
/// each conditioned on their own revealed answers. Students for whom the
/// chosen question is a target or unanswerable skip that step.
pub fn sing_strategy(
    model: &PVae,
    cache: &FeatureCache,
    imputer: &dyn Predictor,
    population: &[Participant<'_>],
    config: &StrategyConfig,
) -> Result<SharedSequence> {
    config.validate()?;
    if population.is_empty() {
        return Err(Error::invalid("shared sequence needs a nonempty population"));
    }
    let m = model.n_questions();
    let mut sessions = population
        .iter()
        .map(|p| {
            check_targets(model, &p.targets)?;
            Ok(SelectionSession::new(p.student, p.targets.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sequence = Vec::new();
    let mut rewards = Vec::new();
    let mut rejected: Vec<usize> = Vec::new();
    let mut exhausted = false;
    for step in 0..config.steps {
        // Per student, the reward of every question they could take.
        let per_student: Vec<Vec<Option<f64>>> = population
            .par_iter()
            .zip(&sessions)
            .map(|(p, s)| {
                let ctx = RewardContext::new(model, cache, &s.observed, config.reward_samples, reward_seed(config, p.student, step))?;
                let mut row = vec![None; m];
                for j in s.candidates(m, p.oracle, config.pool, &[]) {
                    if !sequence.contains(&j) {
                        row[j] = Some(ctx.reward(j)?);
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut scored: Vec<(usize, f64)> = (0..m)
            .filter(|j| !rejected.contains(j))
            .filter_map(|j| {
                let (sum, count) = per_student.iter().filter_map(|row| row[j]).fold((0.0, 0usize), |(s, c), r| (s + r, c + 1));
                (count > 0).then(|| (j, sum / count as f64))
            })
            .collect();
        let picked = loop {
            let Some((j, r)) = argmax_reward(&scored) else { break None };
            let answerable = population.iter().zip(&sessions).any(|(p, s)| s.open(j) && p.oracle.answer(j).is_some());
            if answerable {
                break Some((j, r));
            }
            rejected.push(j);
            scored.retain(|c| c.0 != j);
        };
        let Some((j, r)) = picked else {
            exhausted = true;
            break;
        };
        sequence.push(j);
        rewards.push(r);
        for ((p, s), row) in population.iter().zip(sessions.iter_mut()).zip(&per_student) {
            if s.open(j) {
                if let Some(v) = p.oracle.answer(j) {
                    s.reveal(j, v, row[j].unwrap_or(f64::NAN));
                }
            }
        }
        sessions
            .par_iter_mut()
            .try_for_each(|s| s.record_mae(imputer, impute_seed(config, s.student, step)))?;
    }
    for s in &mut sessions {
        s.exhausted = exhausted;
    }
    Ok(SharedSequence { sequence, rewards, sessions, exhausted })
}
