//! Scalar activations and dense forward helpers used on the inference path.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Logistic function, evaluated in the branch that avoids overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`, strictly positive for finite input.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        // exp underflows below about -745
        x.exp().max(f64::MIN_POSITIVE)
    } else {
        x.exp().ln_1p()
    }
}

/// `ln sigmoid(x) = -softplus(-x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Bernoulli log-likelihood of `x ∈ {0,1}` under `p = sigmoid(logit)`.
#[inline]
pub fn bernoulli_log_lik(x: f64, logit: f64) -> f64 {
    x * logit - softplus(logit)
}

/// `weights · input + bias` with `weights` laid out as `out × in`.
pub fn forward_affine(input: &[f64], weights: &Array2<f64>, bias: &[f64]) -> Result<Vec<f64>> {
    let (rows, cols) = weights.dim();
    if cols != input.len() || rows != bias.len() {
        return Err(Error::ShapeMismatch {
            op: "forward_affine",
            detail: format!(
                "weights {rows}x{cols}, input {}, bias {}",
                input.len(),
                bias.len()
            ),
        });
    }
    let mut out = vec![0.0; rows];
    affine_into(weights, bias, input, &mut out);
    Ok(out)
}

/// Unchecked affine map into a caller buffer. Summation runs in column order.
#[inline]
pub(crate) fn affine_into(weights: &Array2<f64>, bias: &[f64], input: &[f64], out: &mut [f64]) {
    let cols = input.len();
    let w = weights.as_slice().expect("parameter tensors are contiguous");
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = bias[r];
        for (a, b) in row.iter().zip(input) {
            acc += a * b;
        }
        *o = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn affine_identity() {
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(forward_affine(&[1.0, 2.0], &w, &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn affine_zero_weights_returns_bias() {
        let w = array![[0.0, 0.0]];
        assert_eq!(forward_affine(&[5.0, -7.0], &w, &[3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn affine_hand_multiply() {
        let w = array![[2.0, 0.0], [0.0, 3.0]];
        assert_eq!(forward_affine(&[1.0, 1.0], &w, &[1.0, 1.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn affine_shape_mismatch_is_error() {
        let w = array![[1.0, 0.0, 0.0]];
        assert!(matches!(
            forward_affine(&[1.0, 2.0], &w, &[0.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn sigmoid_and_softplus_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) - 0.880_797_077_977_882_3).abs() < 1e-15);
        for x in [-800.0, -40.0, -1.0, 0.0, 1.0, 40.0, 800.0] {
            assert!(softplus(x) > 0.0, "softplus({x})");
            let s = sigmoid(x);
            assert!((0.0..=1.0).contains(&s));
        }
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
    }
}
