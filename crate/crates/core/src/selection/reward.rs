use rand_distr::{Distribution, StandardNormal};

use crate::data::Response;
use crate::error::{Error, Result};
use crate::math::{gaussian_kl, kl_parts, sigmoid};
use crate::pvae::{FeatureCache, PVae};
use crate::rng;

/// Default number of posterior draws behind the predictive probability.
pub const DEFAULT_REWARD_SAMPLES: usize = 30;

/// Expected KL from the current posterior to the posterior after also
/// seeing the answer to `j`:
///
/// `p̂·KL[q(z | x_O ∪ {1}) ‖ q(z | x_O)] + (1 − p̂)·KL[q(z | x_O ∪ {0}) ‖ q(z | x_O)]`
///
/// where `p̂` averages the decoder over `samples` draws from `q(z | x_O)`.
pub fn information_reward(model: &PVae, observed: &[Response], j: usize, samples: usize, seed: u64) -> Result<f64> {
    if j >= model.n_questions() {
        return Err(Error::QuestionOutOfRange { index: j, count: model.n_questions() });
    }
    if observed.iter().any(|r| r.question == j) {
        return Err(Error::AlreadyConditioned(j));
    }
    if samples == 0 {
        return Err(Error::invalid("reward needs at least one posterior sample"));
    }
    let base = model.encode(observed)?;
    let p = model.impute_subset(observed, &[j], samples, rng::derive(seed, &[rng::REWARD]))?[0];
    let mut with = observed.to_vec();
    with.push(Response::new(j, 1));
    let kl1 = gaussian_kl(&model.encode(&with)?, &base)?;
    with.last_mut().expect("just pushed").value = 0;
    let kl0 = gaussian_kl(&model.encode(&with)?, &base)?;
    Ok(p * kl1 + (1.0 - p) * kl0)
}

/// Everything [`information_reward`] needs about one conditioning set,
/// computed once so that scoring a candidate costs two posterior-head
/// passes and one decoder row per posterior draw.
pub struct RewardContext<'a> {
    model: &'a PVae,
    cache: &'a FeatureCache,
    aggregate: Vec<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    conditioned: Vec<bool>,
}

impl<'a> RewardContext<'a> {
    /// `seed` plays the same role as in [`information_reward`].
    pub fn new(model: &'a PVae, cache: &'a FeatureCache, observed: &[Response], samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::invalid("reward needs at least one posterior sample"));
        }
        model.check_conditioning(observed)?;
        let mut sorted = observed.to_vec();
        sorted.sort_unstable();
        let mut aggregate = vec![0.0; model.dims().pointwise];
        let mut conditioned = vec![false; model.n_questions()];
        for r in &sorted {
            conditioned[r.question] = true;
            for (a, f) in aggregate.iter_mut().zip(cache.feature(r.question, r.value)) {
                *a += f;
            }
        }
        let (mean, std) = model.posterior_parts(&aggregate);
        let mut noise = rng::stream(rng::derive(seed, &[rng::REWARD]), rng::IMPUTE);
        let hidden = (0..samples)
            .map(|_| {
                let z: Vec<f64> = mean
                    .iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let e: f64 = StandardNormal.sample(&mut noise);
                        m + s * e
                    })
                    .collect();
                model.decoder_hidden(&z)
            })
            .collect();
        Ok(Self { model, cache, aggregate, mean, std, hidden, conditioned })
    }

    pub fn is_conditioned(&self, j: usize) -> bool {
        self.conditioned[j]
    }

    /// Predictive `p̂(x_j = 1 | x_O)`.
    pub fn predictive(&self, j: usize) -> f64 {
        let total: f64 = self.hidden.iter().map(|h| sigmoid(self.model.logit_from_hidden(h, j))).sum();
        total / self.hidden.len() as f64
    }

    fn kl_after(&self, j: usize, value: u8) -> f64 {
        let agg: Vec<f64> = self.aggregate.iter().zip(self.cache.feature(j, value)).map(|(a, f)| a + f).collect();
        let (m, s) = self.model.posterior_parts(&agg);
        kl_parts(&m, &s, &self.mean, &self.std)
    }

    pub fn reward(&self, j: usize) -> Result<f64> {
        if j >= self.conditioned.len() {
            return Err(Error::QuestionOutOfRange { index: j, count: self.conditioned.len() });
        }
        if self.conditioned[j] {
            return Err(Error::AlreadyConditioned(j));
        }
        let p = self.predictive(j);
        Ok(p * self.kl_after(j, 1) + (1.0 - p) * self.kl_after(j, 0))
    }
}

/// Highest-reward candidate, the smallest index among equals. `None` for
/// an empty pool.
pub fn argmax_reward(rewards: &[(usize, f64)]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &(j, r) in rewards {
        match best {
            Some((bj, br)) if r < br || (r == br && j > bj) => {}
            _ => best = Some((j, r)),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvae::{ModelDims, PVaeParams, Slot};

    fn model(seed: u64) -> PVae {
        PVae::new(PVaeParams::init(ModelDims { questions: 6, embedding: 2, pointwise: 3, latent: 2, hidden: 4 }, seed).unwrap())
    }

    #[test]
    fn context_matches_direct_evaluation() {
        let m = model(4);
        let cache = FeatureCache::new(&m);
        let obs = [Response::new(4, 1), Response::new(1, 0)];
        let ctx = RewardContext::new(&m, &cache, &obs, 30, 9).unwrap();
        for j in [0, 2, 3, 5] {
            let direct = information_reward(&m, &obs, j, 30, 9).unwrap();
            let fast = ctx.reward(j).unwrap();
            assert!((direct - fast).abs() < 1e-12, "{j}: {direct} vs {fast}");
        }
        assert!(matches!(ctx.reward(4), Err(Error::AlreadyConditioned(4))));
        assert!(matches!(information_reward(&m, &obs, 1, 30, 9), Err(Error::AlreadyConditioned(1))));
    }

    #[test]
    fn input_blind_encoder_gives_zero() {
        let mut p = PVaeParams::init(ModelDims { questions: 3, embedding: 2, pointwise: 3, latent: 2, hidden: 4 }, 2).unwrap();
        p.get_mut(Slot::PointOutW).value_mut().fill(0.0);
        let m = PVae::new(p);
        for j in 1..3 {
            assert_eq!(information_reward(&m, &[Response::new(0, 1)], j, 5, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn argmax_ties_to_lower_index() {
        assert_eq!(argmax_reward(&[(4, 0.1), (2, 0.3), (7, 0.3)]), Some((2, 0.3)));
        assert_eq!(argmax_reward(&[(7, 0.3), (2, 0.3)]), Some((2, 0.3)));
        assert_eq!(argmax_reward(&[(5, 0.0)]), Some((5, 0.0)));
        assert_eq!(argmax_reward(&[]), None);
    }
}
