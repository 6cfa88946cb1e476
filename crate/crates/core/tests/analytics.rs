mod common;

use common::{spearman_oracle, world};
use eduvae::analytics::{difficulty, difficulty_baselines, quality_report, spearman, DifficultyScheme};
use eduvae::data::split_students;
use eduvae::pvae::{train, TrainConfig};
use eduvae::synth::{generate_ground_truth, sample_answers, ObservationModel};

#[test]
fn imputed_difficulty_at_least_as_good_as_observed_under_mcar() {
    let w = world();
    let b = &w.truth.difficulty;
    let model = difficulty(&w.model, &w.matrix, 50, 1).unwrap();
    let observed = difficulty_baselines(&w.matrix, DifficultyScheme::ObservedOnly, 1).unwrap();
    let (rm, ro) = (spearman_oracle(&model.difficulty, b), spearman_oracle(&observed.difficulty, b));
    assert!(rm >= ro, "model {rm} vs observed {ro}");
    assert_eq!(spearman(&model.difficulty, b).unwrap().unwrap(), rm);
}

#[test]
fn ability_biased_observation_degrades_observed_difficulty() {
    let truth = generate_ground_truth(2000, 300, 5).unwrap();
    let rho = |obs: ObservationModel| {
        let s = sample_answers(&truth, &obs, 5).unwrap();
        let d = difficulty_baselines(&s.matrix, DifficultyScheme::ObservedOnly, 0).unwrap();
        spearman_oracle(&d.difficulty, &truth.difficulty)
    };
    let mcar = rho(ObservationModel::Mcar { density: 0.2 });
    let biased = rho(ObservationModel::AbilityBiased { density: 0.2, bandwidth: 0.5 });
    assert!(biased < mcar, "biased {biased} vs MCAR {mcar}");
}

/// Desk-scale 2PL data: 2000 students, 300 questions, 20% MCAR.
#[test]
fn quality_ranks_discrimination_above_entropy() {
    let truth = generate_ground_truth(2000, 300, 1).unwrap();
    let s = sample_answers(&truth, &ObservationModel::Mcar { density: 0.2 }, 1).unwrap();
    let split = split_students(2000, [0.8, 0.1, 0.1], 1).unwrap();
    let model = train(&s.matrix, &split, &TrainConfig { seed: 1, ..TrainConfig::default() }).unwrap().model;
    let q = quality_report(&model, &s.matrix, 500, 2).unwrap();
    let a = &truth.discrimination;
    let (r, e) = (spearman_oracle(&q.reward, a), spearman_oracle(&q.entropy, a));
    assert!(q.reward.iter().all(|&x| x >= 0.0));
    assert!(r > e, "R {r} vs entropy {e}");
}

#[test]
fn random_difficulty_is_uncorrelated_on_average() {
    let w = world();
    let b = &w.truth.difficulty;
    let n = 200;
    let mean: f64 = (0..n)
        .map(|s| spearman_oracle(&difficulty_baselines(&w.matrix, DifficultyScheme::Random, s).unwrap().difficulty, b))
        .sum::<f64>()
        / n as f64;
    // Each draw has standard deviation ≈ 1/√(M−1).
    let se = 1.0 / ((common::QUESTIONS - 1) as f64).sqrt() / (n as f64).sqrt();
    assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
}
