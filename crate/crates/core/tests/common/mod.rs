#![allow(dead_code)]

use std::sync::OnceLock;

use eduvae::data::{split_students, Response, SparseAnswerMatrix, StudentSplit};
use eduvae::pvae::{train, EpochStats, PVae, TrainConfig};
use eduvae::synth::{generate_ground_truth, sample_answers, IrtGroundTruth, ObservationModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STUDENTS: usize = 800;
pub const QUESTIONS: usize = 60;

/// A small MCAR world with a model trained at default settings.
pub struct World {
    pub truth: IrtGroundTruth,
    pub matrix: SparseAnswerMatrix,
    pub complete: Vec<Vec<u8>>,
    pub split: StudentSplit,
    pub model: PVae,
    pub trace: Vec<EpochStats>,
}

pub fn world() -> &'static World {
    static CELL: OnceLock<World> = OnceLock::new();
    CELL.get_or_init(|| {
        let truth = generate_ground_truth(STUDENTS, QUESTIONS, 11).unwrap();
        let sample = sample_answers(&truth, &ObservationModel::Mcar { density: 0.3 }, 11).unwrap();
        let split = split_students(STUDENTS, [0.8, 0.1, 0.1], 11).unwrap();
        let out = train(&sample.matrix, &split, &TrainConfig { seed: 11, ..TrainConfig::default() }).unwrap();
        World { truth, matrix: sample.matrix, complete: sample.complete, split, model: out.model, trace: out.trace }
    })
}

/// Answers of a fresh student of ability `theta` to every question of `truth`.
pub fn answers_at(truth: &IrtGroundTruth, theta: f64, seed: u64) -> Vec<u8> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..truth.n_questions())
        .map(|j| {
            let p = eduvae::synth::answer_probability(theta, truth.discrimination[j], truth.difficulty[j]);
            u8::from(r.random::<f64>() < p)
        })
        .collect()
}

pub fn dense_row(answers: &[u8]) -> Vec<Response> {
    answers.iter().enumerate().map(|(j, &v)| Response::new(j, v)).collect()
}

pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[k]] {
            e += 1;
        }
        for &i in &idx[k..=e] {
            r[i] = (k + e) as f64 / 2.0 + 1.0;
        }
        k = e + 1;
    }
    r
}

/// Pearson correlation of average ranks, written independently of the
/// library's version.
pub fn spearman_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
