use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::baselines::majority_answers;
use crate::data::{QuestionMeta, SparseAnswerMatrix};
use crate::error::{Error, Result};
use crate::pvae::PVae;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyReport {
    pub question_ids: Vec<String>,
    /// Mean correctness over all students of the completed matrix.
    pub easiness: Vec<f64>,
    /// `1 − easiness`.
    pub difficulty: Vec<f64>,
    /// Observed answers per question.
    pub n_observed: Vec<usize>,
    /// Cells filled in by imputation per question.
    pub n_imputed: Vec<usize>,
}

impl DifficultyReport {
    fn from_easiness(matrix: &SparseAnswerMatrix, easiness: Vec<f64>, imputed: bool) -> Self {
        let n = matrix.n_students();
        let n_observed: Vec<usize> = matrix.column_counts().iter().map(|c| c.0).collect();
        let n_imputed = n_observed.iter().map(|&o| if imputed { n - o } else { 0 }).collect();
        Self {
            question_ids: matrix.question_ids().to_vec(),
            difficulty: easiness.iter().map(|e| 1.0 - e).collect(),
            easiness,
            n_observed,
            n_imputed,
        }
    }

    pub fn len(&self) -> usize {
        self.easiness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.easiness.is_empty()
    }

    /// `question_id  easiness  difficulty  n_observed`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "question_id\teasiness\tdifficulty\tn_observed")?;
        for j in 0..self.len() {
            writeln!(w, "{}\t{}\t{}\t{}", self.question_ids[j], self.easiness[j], self.difficulty[j], self.n_observed[j])?;
        }
        Ok(())
    }
}

/// Easiness from the matrix completed by the model: each student's missing
/// cells are imputed from their whole observed row.
pub fn difficulty(model: &PVae, matrix: &SparseAnswerMatrix, samples: usize, seed: u64) -> Result<DifficultyReport> {
    let m = matrix.n_questions();
    if model.n_questions() != m {
        return Err(Error::DimensionMismatch { expected: model.n_questions(), found: m });
    }
    if matrix.n_students() == 0 {
        return Err(Error::EmptyMatrix { students: 0, questions: m });
    }
    let rows: Vec<Vec<f64>> = (0..matrix.n_students())
        .into_par_iter()
        .map(|i| {
            let row = matrix.row(i);
            let mut filled = vec![f64::NAN; m];
            for r in row {
                filled[r.question] = r.x();
            }
            if row.len() < m {
                let missing: Vec<usize> = (0..m).filter(|&j| filled[j].is_nan()).collect();
                let p = model.impute_subset(row, &missing, samples, rng::derive(seed, &[rng::IMPUTE, i as u64]))?;
                for (&j, p) in missing.iter().zip(p) {
                    filled[j] = p;
                }
            }
            Ok(filled)
        })
        .collect::<Result<_>>()?;
    let mut sums = vec![0.0; m];
    for row in &rows {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = matrix.n_students() as f64;
    Ok(DifficultyReport::from_easiness(matrix, sums.into_iter().map(|s| s / n).collect(), true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifficultyScheme {
    /// A seeded random permutation.
    Random,
    /// Missing cells filled with the question's majority answer.
    MajorityImpute,
    /// Column means over observed entries only.
    ObservedOnly,
}

impl DifficultyScheme {
    pub const ALL: [DifficultyScheme; 3] = [DifficultyScheme::Random, DifficultyScheme::MajorityImpute, DifficultyScheme::ObservedOnly];

    pub fn name(self) -> &'static str {
        match self {
            DifficultyScheme::Random => "random",
            DifficultyScheme::MajorityImpute => "majority",
            DifficultyScheme::ObservedOnly => "observed",
        }
    }
}

impl FromStr for DifficultyScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown difficulty scheme `{s}`")))
    }
}

pub fn difficulty_baselines(matrix: &SparseAnswerMatrix, scheme: DifficultyScheme, seed: u64) -> Result<DifficultyReport> {
    let m = matrix.n_questions();
    let n = matrix.n_students();
    if n == 0 || m == 0 {
        return Err(Error::EmptyMatrix { students: n, questions: m });
    }
    let counts = matrix.column_counts();
    let easiness = match scheme {
        DifficultyScheme::Random => {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng::stream(seed, rng::RANDOM));
            let denom = (m.max(2) - 1) as f64;
            let mut e = vec![0.0; m];
            for (rank, &j) in order.iter().enumerate() {
                e[j] = rank as f64 / denom;
            }
            e
        }
        DifficultyScheme::MajorityImpute => {
            let fill = majority_answers(matrix);
            counts
                .iter()
                .zip(&fill)
                .map(|(&(obs, correct), &f)| (correct + (n - obs) * f as usize) as f64 / n as f64)
                .collect()
        }
        DifficultyScheme::ObservedOnly => {
            let (total, correct) = counts.iter().fold((0, 0), |(t, c), &(o, k)| (t + o, c + k));
            let global = if total == 0 { 0.5 } else { correct as f64 / total as f64 };
            counts.iter().map(|&(o, k)| if o == 0 { global } else { k as f64 / o as f64 }).collect()
        }
    };
    Ok(DifficultyReport::from_easiness(matrix, easiness, scheme == DifficultyScheme::MajorityImpute))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicScore {
    pub topic: String,
    pub mean_difficulty: f64,
    pub n_questions: usize,
}

/// Topics by mean difficulty of their questions, hardest first. A question
/// counts toward each of its topics; questions without topics are left out.
pub fn topic_ranking(report: &DifficultyReport, meta: &QuestionMeta) -> Result<Vec<TopicScore>> {
    if meta.topics.len() != report.len() {
        return Err(Error::DimensionMismatch { expected: report.len(), found: meta.topics.len() });
    }
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (j, topics) in meta.topics.iter().enumerate() {
        if topics.is_empty() {
            log::warn!("question `{}` has no topic and is left out of the topic ranking", report.question_ids[j]);
            continue;
        }
        for t in topics {
            let e = acc.entry(t.as_str()).or_default();
            e.0 += report.difficulty[j];
            e.1 += 1;
        }
    }
    let mut out: Vec<TopicScore> = acc
        .into_iter()
        .map(|(t, (s, c))| TopicScore { topic: t.to_string(), mean_difficulty: s / c as f64, n_questions: c })
        .collect();
    out.sort_by(|a, b| b.mean_difficulty.total_cmp(&a.mean_difficulty).then_with(|| a.topic.cmp(&b.topic)));
    Ok(out)
}

/// `rank  topic  mean_difficulty`, ranks from 1.
pub fn write_topic_tsv<W: Write>(ranking: &[TopicScore], mut w: W) -> Result<()> {
    writeln!(w, "rank\ttopic\tmean_difficulty")?;
    for (k, t) in ranking.iter().enumerate() {
        writeln!(w, "{}\t{}\t{}", k + 1, t.topic, t.mean_difficulty)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Response;
    use crate::pvae::{ModelDims, PVaeParams};

    fn full(rows: &[&[u8]]) -> SparseAnswerMatrix {
        let m = rows[0].len();
        let rows = rows.iter().map(|r| r.iter().enumerate().map(|(j, &v)| Response::new(j, v)).collect()).collect();
        SparseAnswerMatrix::with_numeric_ids(m, rows).unwrap()
    }

    fn model(m: usize) -> PVae {
        PVae::new(PVaeParams::init(ModelDims { questions: m, embedding: 2, pointwise: 3, latent: 2, hidden: 4 }, 1).unwrap())
    }

    #[test]
    fn fully_observed_uses_column_means() {
        let x = full(&[&[1, 0, 1], &[1, 1, 0], &[1, 0, 0], &[1, 1, 0]]);
        let r = difficulty(&model(3), &x, 10, 0).unwrap();
        assert_eq!(r.easiness, vec![1.0, 0.5, 0.25]);
        assert_eq!(r.difficulty, vec![0.0, 0.5, 0.75]);
        assert_eq!(r.n_imputed, vec![0, 0, 0]);
        assert_eq!(difficulty_baselines(&x, DifficultyScheme::ObservedOnly, 0).unwrap(), r);
    }

    #[test]
    fn sparse_rows_are_completed() {
        let rows = vec![vec![Response::new(0, 1)], vec![Response::new(1, 0)]];
        let x = SparseAnswerMatrix::with_numeric_ids(2, rows).unwrap();
        let r = difficulty(&model(2), &x, 10, 0).unwrap();
        assert_eq!(r.n_imputed, vec![1, 1]);
        for j in 0..2 {
            assert!((0.0..=1.0).contains(&r.easiness[j]));
            assert!((r.easiness[j] + r.difficulty[j] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn majority_impute_fills_with_one() {
        // Column 0 observed 3 of 5 correct across 7 students.
        let rows = vec![
            vec![Response::new(0, 1)],
            vec![Response::new(0, 1)],
            vec![Response::new(0, 1)],
            vec![Response::new(0, 0)],
            vec![Response::new(0, 0)],
            vec![],
            vec![],
        ];
        let x = SparseAnswerMatrix::with_numeric_ids(1, rows).unwrap();
        let r = difficulty_baselines(&x, DifficultyScheme::MajorityImpute, 0).unwrap();
        assert_eq!(r.easiness, vec![5.0 / 7.0]);
    }

    #[test]
    fn random_scheme_is_a_permutation() {
        let x = full(&[&[1, 0, 1, 0, 1]]);
        let r = difficulty_baselines(&x, DifficultyScheme::Random, 3).unwrap();
        let mut e = r.easiness.clone();
        e.sort_by(f64::total_cmp);
        assert_eq!(e, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(r, difficulty_baselines(&x, DifficultyScheme::Random, 3).unwrap());
    }

    fn report(d: &[f64]) -> DifficultyReport {
        DifficultyReport {
            question_ids: (0..d.len()).map(|j| j.to_string()).collect(),
            easiness: d.iter().map(|v| 1.0 - v).collect(),
            difficulty: d.to_vec(),
            n_observed: vec![0; d.len()],
            n_imputed: vec![0; d.len()],
        }
    }

    fn meta(t: &[&[&str]]) -> QuestionMeta {
        QuestionMeta { topics: t.iter().map(|q| q.iter().map(|s| s.to_string()).collect()).collect() }
    }

    #[test]
    fn topics_ordered_hardest_first() {
        let r = report(&[0.9, 0.1, 0.9, 0.1]);
        let ranking = topic_ranking(&r, &meta(&[&["easy_b"], &["easy"], &["hard"], &["easy"]])).unwrap();
        let names: Vec<_> = ranking.iter().map(|t| t.topic.as_str()).collect();
        assert_eq!(names, ["easy_b", "hard", "easy"]);
        assert_eq!(topic_ranking(&report(&[0.3]), &meta(&[&["only"]])).unwrap().len(), 1);
    }

    #[test]
    fn shared_question_counts_for_both_topics() {
        let r = report(&[0.8, 0.2, 0.5]);
        let ranking = topic_ranking(&r, &meta(&[&["a", "b"], &["a"], &[]])).unwrap();
        assert_eq!(ranking[0].topic, "b");
        assert_eq!(ranking[0].mean_difficulty, 0.8);
        assert_eq!(ranking[1].mean_difficulty, 0.5);
        assert_eq!(ranking[1].n_questions, 2);
    }
}
