//! Greedy question selection by expected information gain, the random and
//! shared-sequence baselines, and their offline replay comparison.

mod evaluate;
mod reward;
mod session;

pub use evaluate::{evaluate_strategies, EvaluationConfig, Strategy, StrategyComparison};
pub use reward::{argmax_reward, information_reward, RewardContext, DEFAULT_REWARD_SAMPLES};
pub use session::{
    rand_strategy, replay_sequence, run_session, sing_strategy, AnswerOracle, CandidatePool, DenseOracle, Participant,
    ReplayOracle, SelectionSession, SharedSequence, StrategyConfig,
};
