mod common;

use common::{answers_at, dense_row, world};
use eduvae::data::{split_students, Response};
use eduvae::eval::{evaluate_imputation, RandomPredictor};
use eduvae::math::{gaussian_kl, DiagGaussian};
use eduvae::pvae::{mean_elbo, train, TrainConfig};
use eduvae::synth::{generate_ground_truth, sample_answers, ObservationModel};

#[test]
fn elbo_improves_over_first_epochs() {
    let w = world();
    assert_eq!(w.trace.len(), 50);
    assert!(w.trace[4].train_elbo > w.trace[0].train_elbo, "{:?}", &w.trace[..5]);
    assert!(w.trace.iter().all(|e| e.train_elbo.is_finite() && e.validation_elbo.is_finite()));
}

#[test]
fn training_is_reproducible() {
    let truth = generate_ground_truth(120, 15, 2).unwrap();
    let s = sample_answers(&truth, &ObservationModel::Mcar { density: 0.5 }, 2).unwrap();
    let split = split_students(120, [0.8, 0.1, 0.1], 2).unwrap();
    let cfg = TrainConfig { epochs: 4, batch_size: 32, seed: 5, ..TrainConfig::default() };
    let a = train(&s.matrix, &split, &cfg).unwrap();
    let b = train(&s.matrix, &split, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.trace, b.trace);
    let c = train(&s.matrix, &split, &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn empty_set_posterior_stays_near_prior() {
    let w = world();
    let q = w.model.encode(&[]).unwrap();
    let k = q.dim();
    let kl = gaussian_kl(&q, &DiagGaussian::standard(k)).unwrap();
    assert!(kl / (k as f64) < 0.5, "KL per dimension {}", kl / k as f64);
}

#[test]
fn validation_elbo_matches_trace_scale() {
    let w = world();
    let v = mean_elbo(&w.model, &w.matrix, &w.split.validation, 5, 1).unwrap();
    let last = w.trace.last().unwrap().validation_elbo;
    assert!((v - last).abs() < 0.1 * last.abs(), "{v} vs {last}");
}

#[test]
fn high_ability_student_imputes_higher() {
    let w = world();
    let hi = dense_row(&answers_at(&w.truth, 2.0, 1));
    let lo = dense_row(&answers_at(&w.truth, -2.0, 2));
    let mean = |row: &[Response]| {
        let p = w.model.impute(row, 50, 3).unwrap();
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        p.iter().sum::<f64>() / p.len() as f64
    };
    let (h, l) = (mean(&hi), mean(&lo));
    assert!(h > l, "θ=+2 mean {h} vs θ=−2 mean {l}");
}

#[test]
fn monte_carlo_imputation_converges() {
    let w = world();
    let i = w.split.test[0];
    let row = w.matrix.row(i);
    let a = w.model.impute(row, 50, 7).unwrap();
    let b = w.model.impute(row, 500, 8).unwrap();
    let rms = (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    assert!(rms < 0.02, "RMS {rms}");
}

#[test]
fn random_predictor_sits_at_chance() {
    let truth = generate_ground_truth(2000, 300, 4).unwrap();
    let s = sample_answers(&truth, &ObservationModel::Mcar { density: 0.2 }, 4).unwrap();
    let students: Vec<usize> = (0..2000).collect();
    let scores = evaluate_imputation(&RandomPredictor, &s.matrix, &students, 0.5, 1).unwrap();
    assert!((scores.accuracy - 0.5).abs() < 0.02, "{}", scores.accuracy);
    assert!((scores.mae - 0.5).abs() < 0.02, "{}", scores.mae);
}
