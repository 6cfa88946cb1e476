use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use super::session::{
    rand_strategy, replay_sequence, run_session, sing_strategy, AnswerOracle, Participant, ReplayOracle, SelectionSession,
    StrategyConfig,
};
use crate::data::{hold_out_targets, Response, SparseAnswerMatrix};
use crate::error::{Error, Result};
use crate::eval::Predictor;
use crate::pvae::{FeatureCache, PVae};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Personalized greedy information reward.
    Ours,
    /// Uniform random order.
    Rand,
    /// One population-averaged sequence.
    Sing,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Ours, Strategy::Rand, Strategy::Sing];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ours => "ours",
            Strategy::Rand => "rand",
            Strategy::Sing => "sing",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::invalid(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    pub strategy: StrategyConfig,
    pub runs: usize,
    /// Test students sampled per run (all of them when fewer).
    pub students_per_run: usize,
    /// Share of each student's observed row held out as targets.
    pub target_fraction: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { strategy: StrategyConfig::default(), runs: 10, students_per_run: 100, target_fraction: 0.1 }
    }
}

/// Per-step MAE statistics of each strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyComparison {
    pub strategies: Vec<Strategy>,
    /// `mean_mae[s][k]`: mean target MAE of strategy `s` after step `k + 1`.
    pub mean_mae: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Sessions contributing to each cell.
    pub count: Vec<Vec<usize>>,
}

impl StrategyComparison {
    /// `strategy  step  mean_mae  stderr`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "strategy\tstep\tmean_mae\tstderr")?;
        for (s, strategy) in self.strategies.iter().enumerate() {
            for k in 0..self.mean_mae[s].len() {
                writeln!(w, "{}\t{}\t{}\t{}", strategy.name(), k + 1, self.mean_mae[s][k], self.stderr[s][k])?;
            }
        }
        Ok(())
    }
}

fn summarize(sessions: &[SelectionSession], steps: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut mean = Vec::with_capacity(steps);
    let mut stderr = Vec::with_capacity(steps);
    let mut count = Vec::with_capacity(steps);
    for k in 0..steps {
        let v: Vec<f64> = sessions.iter().filter_map(|s| s.mae.get(k).copied()).filter(|x| !x.is_nan()).collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let se = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt() } else { f64::NAN };
        mean.push(m);
        stderr.push(se);
        count.push(v.len());
    }
    (mean, stderr, count)
}

/// Offline replay comparison: for every run, sample test students, hold
/// out a share of each observed row as targets, and let each strategy ask
/// questions from the rest of the row. `model` drives the rewards and
/// `imputer` scores the targets.
pub fn evaluate_strategies(
    model: &PVae,
    imputer: &dyn Predictor,
    matrix: &SparseAnswerMatrix,
    students: &[usize],
    strategies: &[Strategy],
    config: &EvaluationConfig,
) -> Result<StrategyComparison> {
    config.strategy.validate()?;
    if config.runs == 0 || config.students_per_run == 0 {
        return Err(Error::invalid("runs and students per run must be ≥ 1"));
    }
    if model.n_questions() != matrix.n_questions() {
        return Err(Error::DimensionMismatch { expected: model.n_questions(), found: matrix.n_questions() });
    }
    let eligible: Vec<usize> = students.iter().copied().filter(|&i| matrix.row(i).len() >= 2).collect();
    if eligible.is_empty() {
        return Err(Error::invalid("no test student has two or more observed answers"));
    }
    let cache = FeatureCache::new(model);
    let seed = config.strategy.seed;
    let mut by_strategy: Vec<Vec<SelectionSession>> = vec![Vec::new(); strategies.len()];
    for run in 0..config.runs {
        let k = config.students_per_run.min(eligible.len());
        let mut picked: Vec<usize> =
            index::sample(&mut rng::sub(seed, rng::EVAL, &[run as u64]), eligible.len(), k).into_iter().map(|p| eligible[p]).collect();
        picked.sort_unstable();
        let split: Vec<(Vec<Response>, Vec<Response>)> = picked
            .iter()
            .map(|&i| hold_out_targets(matrix.row(i), config.target_fraction, rng::derive(seed, &[rng::HOLDOUT, run as u64, i as u64])))
            .collect::<Result<_>>()?;
        let run_config = StrategyConfig { seed: rng::derive(seed, &[run as u64]), ..config.strategy.clone() };
        let oracles: Vec<ReplayOracle<'_>> = split.iter().map(|(cond, _)| ReplayOracle { row: cond }).collect();
        for (s, strategy) in strategies.iter().enumerate() {
            let sessions: Vec<SelectionSession> = match strategy {
                Strategy::Ours => picked
                    .par_iter()
                    .zip(&oracles)
                    .zip(&split)
                    .map(|((&i, o), (_, t))| run_session(model, &cache, imputer, i, o, t.clone(), &run_config))
                    .collect::<Result<_>>()?,
                Strategy::Rand => picked
                    .par_iter()
                    .zip(&oracles)
                    .zip(&split)
                    .map(|((&i, o), (cond, t))| {
                        let pool: Vec<usize> = cond.iter().map(|r| r.question).collect();
                        let (seq, _) = rand_strategy(&pool, run_config.steps, rng::derive(run_config.seed, &[rng::RANDOM, i as u64]));
                        replay_sequence(model, imputer, i, o, t.clone(), &seq, &run_config)
                    })
                    .collect::<Result<_>>()?,
                Strategy::Sing => {
                    let population: Vec<Participant<'_>> = picked
                        .iter()
                        .zip(&oracles)
                        .zip(&split)
                        .map(|((&i, o), (_, t))| Participant { student: i, oracle: o as &dyn AnswerOracle, targets: t.clone() })
                        .collect();
                    sing_strategy(model, &cache, imputer, &population, &run_config)?.sessions
                }
            };
            by_strategy[s].extend(sessions);
        }
        log::info!("selection run {}/{} done", run + 1, config.runs);
    }
    let mut out = StrategyComparison { strategies: strategies.to_vec(), mean_mae: vec![], stderr: vec![], count: vec![] };
    for sessions in &by_strategy {
        let (m, se, c) = summarize(sessions, config.strategy.steps);
        out.mean_mae.push(m);
        out.stderr.push(se);
        out.count.push(c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::PVaePredictor;
    use crate::pvae::{ModelDims, PVaeParams};

    #[test]
    fn table_shape() {
        let dims = ModelDims { questions: 15, embedding: 2, pointwise: 3, latent: 2, hidden: 4 };
        let model = PVae::new(PVaeParams::init(dims, 1).unwrap());
        let rows = (0..6).map(|i| (0..15).filter(|j| (i + j) % 3 != 0).map(|j| Response::new(j, ((i * j) % 2) as u8)).collect()).collect();
        let matrix = SparseAnswerMatrix::with_numeric_ids(15, rows).unwrap();
        let config = EvaluationConfig {
            strategy: StrategyConfig { steps: 3, reward_samples: 4, ..StrategyConfig::default() },
            runs: 2,
            students_per_run: 4,
            target_fraction: 0.2,
        };
        let imp = PVaePredictor { model: &model, samples: 4 };
        let c = evaluate_strategies(&model, &imp, &matrix, &[0, 1, 2, 3, 4, 5], &Strategy::ALL, &config).unwrap();
        assert_eq!(c.mean_mae.len(), 3);
        assert!(c.mean_mae.iter().all(|r| r.len() == 3));
        assert!(c.count.iter().flatten().all(|&n| n == 8));
        let mut buf = Vec::new();
        c.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
        assert_eq!(c, evaluate_strategies(&model, &imp, &matrix, &[0, 1, 2, 3, 4, 5], &Strategy::ALL, &config).unwrap());
    }

    #[test]
    fn strategy_names() {
        assert_eq!("sing".parse::<Strategy>().unwrap(), Strategy::Sing);
        assert!("best".parse::<Strategy>().is_err());
    }
}
