use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SparseAnswerMatrix;
use crate::error::{Error, Result};
use crate::math::ParamTensor;
use crate::rng;

/// Layer sizes of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Number of questions `M`.
    pub questions: usize,
    /// Question embedding length `c`.
    pub embedding: usize,
    /// Output length `d` of the per-answer feature net.
    pub pointwise: usize,
    /// Latent dimension `K`.
    pub latent: usize,
    /// Width of the single hidden layer in each of the three nets.
    pub hidden: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let ModelDims { questions, embedding, pointwise, latent, hidden } = *self;
        if [questions, embedding, pointwise, latent, hidden].contains(&0) {
            return Err(Error::invalid(format!("all model dimensions must be ≥ 1: {self:?}")));
        }
        Ok(())
    }

    /// Length of the per-answer input `[x, x·e_j, b_j]`.
    pub fn point_input(&self) -> usize {
        self.embedding + 2
    }
}

/// Index of each tensor inside [`PVaeParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Slot {
    Embedding,
    QuestionBias,
    PointHiddenW,
    PointHiddenB,
    PointOutW,
    PointOutB,
    PostHiddenW,
    PostHiddenB,
    PostOutW,
    PostOutB,
    DecHiddenW,
    DecHiddenB,
    DecOutW,
    DecOutB,
}

impl Slot {
    pub const ALL: [Slot; 14] = [
        Slot::Embedding,
        Slot::QuestionBias,
        Slot::PointHiddenW,
        Slot::PointHiddenB,
        Slot::PointOutW,
        Slot::PointOutB,
        Slot::PostHiddenW,
        Slot::PostHiddenB,
        Slot::PostOutW,
        Slot::PostOutB,
        Slot::DecHiddenW,
        Slot::DecHiddenB,
        Slot::DecOutW,
        Slot::DecOutB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Embedding => "question_embedding",
            Slot::QuestionBias => "question_bias",
            Slot::PointHiddenW => "point_hidden_w",
            Slot::PointHiddenB => "point_hidden_b",
            Slot::PointOutW => "point_out_w",
            Slot::PointOutB => "point_out_b",
            Slot::PostHiddenW => "posterior_hidden_w",
            Slot::PostHiddenB => "posterior_hidden_b",
            Slot::PostOutW => "posterior_out_w",
            Slot::PostOutB => "posterior_out_b",
            Slot::DecHiddenW => "decoder_hidden_w",
            Slot::DecHiddenB => "decoder_hidden_b",
            Slot::DecOutW => "decoder_out_w",
            Slot::DecOutB => "decoder_out_b",
        }
    }

    fn shape(self, d: &ModelDims) -> (usize, usize) {
        let (m, h, k) = (d.questions, d.hidden, d.latent);
        match self {
            Slot::Embedding => (m, d.embedding),
            Slot::QuestionBias => (m, 1),
            Slot::PointHiddenW => (h, d.point_input()),
            Slot::PointHiddenB => (1, h),
            Slot::PointOutW => (d.pointwise, h),
            Slot::PointOutB => (1, d.pointwise),
            Slot::PostHiddenW => (h, d.pointwise),
            Slot::PostHiddenB => (1, h),
            Slot::PostOutW => (2 * k, h),
            Slot::PostOutB => (1, 2 * k),
            Slot::DecHiddenW => (h, k),
            Slot::DecHiddenB => (1, h),
            Slot::DecOutW => (m, h),
            Slot::DecOutB => (m, 1),
        }
    }

    fn is_bias(self) -> bool {
        matches!(
            self,
            Slot::QuestionBias
                | Slot::PointHiddenB
                | Slot::PointOutB
                | Slot::PostHiddenB
                | Slot::PostOutB
                | Slot::DecHiddenB
                | Slot::DecOutB
        )
    }
}

/// All trainable tensors: question embeddings and biases, the per-answer
/// feature net, the posterior head, and the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PVaeParams {
    dims: ModelDims,
    tensors: Vec<ParamTensor>,
}

impl PVaeParams {
    /// All tensors zero.
    pub fn zeros(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let tensors = Slot::ALL
            .iter()
            .map(|s| {
                let (r, c) = s.shape(&dims);
                ParamTensor::zeros(r, c)
            })
            .collect();
        Ok(Self { dims, tensors })
    }

    /// Weights and embeddings from `N(0, 1/fan_in)`, biases zero.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut r = rng::stream(seed, rng::INIT);
        let tensors = Slot::ALL
            .iter()
            .map(|&s| {
                let (rows, cols) = s.shape(&dims);
                if s.is_bias() {
                    ParamTensor::zeros(rows, cols)
                } else {
                    ParamTensor::scaled_normal(rows, cols, cols, &mut r)
                }
            })
            .collect();
        Ok(Self { dims, tensors })
    }

    /// Set the question bias and the decoder output bias of every question
    /// to the logit of its observed correctness rate, clamped to `[-3, 3]`.
    /// Questions without observations keep 0.
    pub fn init_question_biases(&mut self, matrix: &SparseAnswerMatrix, rows: &[usize]) -> Result<()> {
        if matrix.n_questions() != self.dims.questions {
            return Err(Error::DimensionMismatch { expected: self.dims.questions, found: matrix.n_questions() });
        }
        let mut counts = vec![(0usize, 0usize); self.dims.questions];
        for &i in rows {
            for r in matrix.row(i) {
                counts[r.question].0 += 1;
                counts[r.question].1 += r.value as usize;
            }
        }
        let logits: Vec<f64> = counts
            .iter()
            .map(|&(n, c)| {
                if n == 0 {
                    0.0
                } else {
                    let p = c as f64 / n as f64;
                    (p / (1.0 - p)).ln().clamp(-3.0, 3.0)
                }
            })
            .collect();
        for slot in [Slot::QuestionBias, Slot::DecOutB] {
            let v = self.tensors[slot as usize].value_mut();
            for (j, l) in logits.iter().enumerate() {
                v[[j, 0]] = *l;
            }
        }
        Ok(())
    }

    /// Build from tensors in [`Slot::ALL`] order, checking every shape.
    pub fn from_tensors(dims: ModelDims, values: Vec<Array2<f64>>) -> Result<Self> {
        dims.validate()?;
        if values.len() != Slot::ALL.len() {
            return Err(Error::DimensionMismatch { expected: Slot::ALL.len(), found: values.len() });
        }
        let mut tensors = Vec::with_capacity(values.len());
        for (slot, v) in Slot::ALL.iter().zip(values) {
            let want = slot.shape(&dims);
            if v.dim() != want {
                return Err(Error::ShapeMismatch {
                    op: "PVaeParams::from_tensors",
                    detail: format!("`{}` is {:?}, expected {want:?}", slot.name(), v.dim()),
                });
            }
            tensors.push(ParamTensor::new(v.as_standard_layout().to_owned()));
        }
        Ok(Self { dims, tensors })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn get(&self, slot: Slot) -> &ParamTensor {
        &self.tensors[slot as usize]
    }

    pub fn get_mut(&mut self, slot: Slot) -> &mut ParamTensor {
        &mut self.tensors[slot as usize]
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn named_mut(&mut self) -> impl Iterator<Item = (&'static str, &mut ParamTensor)> {
        Slot::ALL.iter().map(|s| s.name()).zip(self.tensors.iter_mut())
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(ParamTensor::zero_grad);
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(|t| t.value().len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(ParamTensor::is_finite)
    }
}
