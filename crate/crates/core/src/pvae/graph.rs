//! The minibatch partial ELBO recorded on a tape.
//!
//! All observations of the batch are stacked so each layer is one matrix
//! product; a segment sum folds per-answer features back into one
//! aggregate per student. Only observed entries reach the likelihood.

use ndarray::Array2;

use super::params::{PVaeParams, Slot};
use crate::data::Response;
use crate::math::{Tape, Var, STD_FLOOR};

/// One student's contribution to a batch.
#[derive(Debug, Clone)]
pub struct BatchRow {
    /// Answers fed to the encoder.
    pub encoder_input: Vec<Response>,
    /// Answers scored by the likelihood term.
    pub likelihood: Vec<Response>,
    /// One standard-normal vector of length `K` per Monte Carlo sample.
    pub noise: Vec<Vec<f64>>,
}

/// Nodes of interest in a recorded batch.
pub struct BatchGraph {
    /// Sum over rows of each row's partial ELBO.
    pub elbo_sum: Var,
    /// `−elbo_sum / rows`, the quantity minimized in training.
    pub loss: Var,
    pub params: Vec<Var>,
}

pub fn record_batch(tape: &mut Tape, params: &PVaeParams, rows: &[BatchRow]) -> BatchGraph {
    let dims = *params.dims();
    let samples = rows.first().map_or(1, |r| r.noise.len());
    assert!(samples >= 1 && rows.iter().all(|r| r.noise.len() == samples), "uniform sample count");
    let p: Vec<Var> = Slot::ALL.iter().map(|&s| tape.param(s as usize, params.get(s).value())).collect();
    let v = |s: Slot| p[s as usize];

    // Encoder over every conditioning answer in the batch.
    let mut enc_q = Vec::new();
    let mut enc_x = Vec::new();
    let mut enc_seg = Vec::new();
    for (b, row) in rows.iter().enumerate() {
        for r in &row.encoder_input {
            enc_q.push(r.question);
            enc_x.push(r.x());
            enc_seg.push(b);
        }
    }
    let n_enc = enc_q.len();
    let emb = tape.gather_rows(v(Slot::Embedding), enc_q.clone());
    let x_emb = tape.scale_rows(emb, enc_x.clone());
    let bias = tape.gather_rows(v(Slot::QuestionBias), enc_q);
    let x_col = tape.constant(Array2::from_shape_vec((n_enc, 1), enc_x).expect("column"));
    let s = tape.concat_cols(&[x_col, x_emb, bias]);
    let h = tape.affine(s, v(Slot::PointHiddenW), v(Slot::PointHiddenB));
    let h = tape.tanh(h);
    let feat = tape.affine(h, v(Slot::PointOutW), v(Slot::PointOutB));
    let agg = tape.segment_sum(feat, enc_seg, rows.len());

    // Posterior head.
    let ph = tape.affine(agg, v(Slot::PostHiddenW), v(Slot::PostHiddenB));
    let ph = tape.tanh(ph);
    let head = tape.affine(ph, v(Slot::PostOutW), v(Slot::PostOutB));
    let mean = tape.slice_cols(head, 0, dims.latent);
    let raw = tape.slice_cols(head, dims.latent, 2 * dims.latent);
    let std = tape.softplus(raw);
    let std = tape.add_scalar(std, STD_FLOOR);
    let kl = tape.kl_std_normal(mean, std);

    // Decoder, scored on observed entries only.
    let mut lik_q = Vec::new();
    let mut lik_x = Vec::new();
    let mut lik_row = Vec::new();
    for (b, row) in rows.iter().enumerate() {
        for r in &row.likelihood {
            lik_q.push(r.question);
            lik_x.push(r.x());
            lik_row.push(b);
        }
    }
    let w_out = tape.gather_rows(v(Slot::DecOutW), lik_q.clone());
    let b_out = tape.gather_rows(v(Slot::DecOutB), lik_q);

    let mut ll_total: Option<Var> = None;
    for s in 0..samples {
        let mut eps = Array2::zeros((rows.len(), dims.latent));
        for (b, row) in rows.iter().enumerate() {
            for (k, e) in row.noise[s].iter().enumerate() {
                eps[[b, k]] = *e;
            }
        }
        let eps = tape.constant(eps);
        let spread = tape.mul(std, eps);
        let z = tape.add(mean, spread);
        let dh = tape.affine(z, v(Slot::DecHiddenW), v(Slot::DecHiddenB));
        let dh = tape.tanh(dh);
        let dot = tape.row_dot(w_out, dh, lik_row.clone());
        let logits = tape.add(dot, b_out);
        let ll = tape.bernoulli_log_lik(logits, lik_x.clone());
        ll_total = Some(match ll_total {
            None => ll,
            Some(acc) => tape.add(acc, ll),
        });
    }
    let ll = ll_total.expect("at least one sample");
    let ll = if samples > 1 { tape.scale(ll, 1.0 / samples as f64) } else { ll };
    let elbo_sum = tape.sub(ll, kl);
    let loss = tape.scale(elbo_sum, -1.0 / rows.len().max(1) as f64);
    BatchGraph { elbo_sum, loss, params: p }
}
