//! Inference path: set encoder, decoder, ELBO evaluation and imputation on
//! plain `f64` buffers. Training builds the same computation on a tape.

use rand_distr::{Distribution, StandardNormal};

use super::params::{ModelDims, PVaeParams, Slot};
use crate::data::Response;
use crate::error::{Error, Result};
use crate::math::{affine_into, bernoulli_log_lik, gaussian_kl, sigmoid, softplus, DiagGaussian, STD_FLOOR};
use crate::rng;

/// Posterior over the student embedding.
pub type PosteriorGaussian = DiagGaussian;

pub const DEFAULT_IMPUTE_SAMPLES: usize = 50;

/// A partial VAE over binary answers.
#[derive(Debug, Clone, PartialEq)]
pub struct PVae {
    pub params: PVaeParams,
}

impl PVae {
    pub fn new(params: PVaeParams) -> Self {
        Self { params }
    }

    pub fn dims(&self) -> &ModelDims {
        self.params.dims()
    }

    pub fn n_questions(&self) -> usize {
        self.dims().questions
    }

    /// Reject out-of-range or repeated question indices.
    pub fn check_conditioning(&self, observed: &[Response]) -> Result<()> {
        let m = self.n_questions();
        let mut seen = vec![false; m];
        for r in observed {
            if r.question >= m {
                return Err(Error::QuestionOutOfRange { index: r.question, count: m });
            }
            if std::mem::replace(&mut seen[r.question], true) {
                return Err(Error::DuplicateQuestion(r.question));
            }
        }
        Ok(())
    }

    /// Feature vector `h(s_ij)` of one answer, `s_ij = [x, x·e_j, b_j]`.
    pub fn pointwise(&self, question: usize, value: u8) -> Vec<f64> {
        let d = self.dims();
        let x = f64::from(value);
        let p = &self.params;
        let mut s = Vec::with_capacity(d.point_input());
        s.push(x);
        s.extend(p.get(Slot::Embedding).row(question).iter().map(|e| x * e));
        s.push(p.get(Slot::QuestionBias).row(question)[0]);
        let mut hidden = vec![0.0; d.hidden];
        affine_into(p.get(Slot::PointHiddenW).value(), p.get(Slot::PointHiddenB).as_slice(), &s, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = vec![0.0; d.pointwise];
        affine_into(p.get(Slot::PointOutW).value(), p.get(Slot::PointOutB).as_slice(), &hidden, &mut out);
        out
    }

    /// Sum of pointwise features over `observed`, in increasing question
    /// order regardless of input order. The empty set gives the zero vector.
    pub fn aggregate(&self, observed: &[Response]) -> Result<Vec<f64>> {
        self.check_conditioning(observed)?;
        let mut sorted = observed.to_vec();
        sorted.sort_unstable();
        let mut agg = vec![0.0; self.dims().pointwise];
        for r in &sorted {
            for (a, f) in agg.iter_mut().zip(self.pointwise(r.question, r.value)) {
                *a += f;
            }
        }
        Ok(agg)
    }

    /// Posterior head applied to an aggregated feature vector.
    pub fn posterior_from_aggregate(&self, agg: &[f64]) -> PosteriorGaussian {
        let (mean, std) = self.posterior_parts(agg);
        DiagGaussian::new(mean, std).expect("softplus + floor keeps std positive")
    }

    pub(crate) fn posterior_parts(&self, agg: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dims();
        let p = &self.params;
        let mut hidden = vec![0.0; d.hidden];
        affine_into(p.get(Slot::PostHiddenW).value(), p.get(Slot::PostHiddenB).as_slice(), agg, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = vec![0.0; 2 * d.latent];
        affine_into(p.get(Slot::PostOutW).value(), p.get(Slot::PostOutB).as_slice(), &hidden, &mut out);
        let std = out[d.latent..].iter().map(|&r| softplus(r) + STD_FLOOR).collect();
        out.truncate(d.latent);
        (out, std)
    }

    /// `q(z | x_O)`.
    pub fn encode(&self, observed: &[Response]) -> Result<PosteriorGaussian> {
        Ok(self.posterior_from_aggregate(&self.aggregate(observed)?))
    }

    pub(crate) fn decoder_hidden(&self, z: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let mut hidden = vec![0.0; self.dims().hidden];
        affine_into(p.get(Slot::DecHiddenW).value(), p.get(Slot::DecHiddenB).as_slice(), z, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        hidden
    }

    #[inline]
    pub(crate) fn logit_from_hidden(&self, hidden: &[f64], question: usize) -> f64 {
        let p = &self.params;
        let w = p.get(Slot::DecOutW).row(question);
        let mut acc = p.get(Slot::DecOutB).row(question)[0];
        for (a, b) in w.iter().zip(hidden) {
            acc += a * b;
        }
        acc
    }

    /// Bernoulli logits of every question given `z`.
    pub fn decode_logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let hidden = self.decoder_hidden(z);
        Ok((0..self.n_questions()).map(|j| self.logit_from_hidden(&hidden, j)).collect())
    }

    /// `p(x_j = 1 | z)` for every question.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode_logits(z)?.into_iter().map(sigmoid).collect())
    }

    /// Logits for a subset of questions.
    pub fn decode_logits_subset(&self, z: &[f64], questions: &[usize]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let hidden = self.decoder_hidden(z);
        Ok(questions.iter().map(|&j| self.logit_from_hidden(&hidden, j)).collect())
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dims().latent {
            return Err(Error::DimensionMismatch { expected: self.dims().latent, found: z.len() });
        }
        Ok(())
    }

    /// Partial ELBO with separate encoder input and likelihood set.
    ///
    /// `noise` holds one standard-normal vector per Monte Carlo sample; the
    /// expected log-likelihood is their average.
    pub fn partial_elbo_split(&self, encoder_input: &[Response], likelihood: &[Response], noise: &[Vec<f64>]) -> Result<f64> {
        if noise.is_empty() {
            return Err(Error::invalid("partial ELBO needs at least one noise sample"));
        }
        let q = self.encode(encoder_input)?;
        let questions: Vec<usize> = likelihood.iter().map(|r| r.question).collect();
        let mut ll = 0.0;
        for eps in noise {
            let z = crate::math::reparam_sample(&q, eps)?;
            let logits = self.decode_logits_subset(&z, &questions)?;
            ll += likelihood.iter().zip(&logits).map(|(r, &l)| bernoulli_log_lik(r.x(), l)).sum::<f64>();
        }
        ll /= noise.len() as f64;
        let kl = gaussian_kl(&q, &DiagGaussian::standard(self.dims().latent))?;
        Ok(ll - kl)
    }

    /// `E_q[log p(x_O | z)] − KL[q(z | x_O) ‖ N(0, I)]`.
    pub fn partial_elbo(&self, observed: &[Response], noise: &[Vec<f64>]) -> Result<f64> {
        self.partial_elbo_split(observed, observed, noise)
    }

    /// Standard VAE ELBO of a fully observed row (`dense[j]` is the answer to
    /// question `j`), decoding all `M` logits.
    pub fn full_elbo(&self, dense: &[u8], noise: &[Vec<f64>]) -> Result<f64> {
        if dense.len() != self.n_questions() {
            return Err(Error::DimensionMismatch { expected: self.n_questions(), found: dense.len() });
        }
        let row: Vec<Response> = dense.iter().enumerate().map(|(j, &v)| Response::new(j, v)).collect();
        let q = self.encode(&row)?;
        let mut ll = 0.0;
        for eps in noise {
            let z = crate::math::reparam_sample(&q, eps)?;
            let logits = self.decode_logits(&z)?;
            ll += dense.iter().zip(&logits).map(|(&x, &l)| bernoulli_log_lik(f64::from(x), l)).sum::<f64>();
        }
        ll /= noise.len() as f64;
        Ok(ll - gaussian_kl(&q, &DiagGaussian::standard(self.dims().latent))?)
    }

    /// `p(x_j = 1 | x_O)` for the listed questions, averaging the decoder over
    /// `samples` posterior draws.
    pub fn impute_subset(&self, observed: &[Response], questions: &[usize], samples: usize, seed: u64) -> Result<Vec<f64>> {
        if samples == 0 {
            return Err(Error::invalid("impute needs at least one sample"));
        }
        if let Some(&j) = questions.iter().find(|&&j| j >= self.n_questions()) {
            return Err(Error::QuestionOutOfRange { index: j, count: self.n_questions() });
        }
        let q = self.encode(observed)?;
        let mut r = rng::stream(seed, rng::IMPUTE);
        let k = self.dims().latent;
        let mut acc = vec![0.0; questions.len()];
        let mut z = vec![0.0; k];
        for _ in 0..samples {
            for ((zi, m), s) in z.iter_mut().zip(q.mean()).zip(q.std()) {
                let e: f64 = StandardNormal.sample(&mut r);
                *zi = m + s * e;
            }
            let hidden = self.decoder_hidden(&z);
            for (a, &j) in acc.iter_mut().zip(questions) {
                *a += sigmoid(self.logit_from_hidden(&hidden, j));
            }
        }
        acc.iter_mut().for_each(|a| *a /= samples as f64);
        Ok(acc)
    }

    /// `p(x_j = 1 | x_O)` for all `M` questions, including those in `x_O`.
    pub fn impute(&self, observed: &[Response], samples: usize, seed: u64) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.n_questions()).collect();
        self.impute_subset(observed, &all, samples, seed)
    }
}

/// Precomputed `h(s_j)` for both answer values of every question, so the
/// posterior after adding one answer to a known aggregate costs one pass
/// through the posterior head.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    features: Vec<[Vec<f64>; 2]>,
}

impl FeatureCache {
    pub fn new(model: &PVae) -> Self {
        let features = (0..model.n_questions()).map(|j| [model.pointwise(j, 0), model.pointwise(j, 1)]).collect();
        Self { features }
    }

    pub fn feature(&self, question: usize, value: u8) -> &[f64] {
        &self.features[question][value as usize]
    }
}
