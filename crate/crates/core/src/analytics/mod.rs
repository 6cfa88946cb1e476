//! Question difficulty and quality, the entropy baseline, topic rankings,
//! and rank correlation.

mod difficulty;
mod quality;
mod rank;

pub use difficulty::{
    difficulty, difficulty_baselines, topic_ranking, write_topic_tsv, DifficultyReport, DifficultyScheme, TopicScore,
};
pub use quality::{
    binary_entropy, entropy_baseline, quality, quality_report, QualityReport, QualityScore, DEFAULT_QUALITY_SAMPLES,
};
pub use rank::{average_ranks, spearman};
