use crate::error::{Error, Result};

/// Diagonal Gaussian `N(μ, diag(σ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: std.len() });
        }
        if let Some((index, &value)) = std.iter().enumerate().find(|(_, s)| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::NonPositiveStd { index, value });
        }
        if let Some(bad) = mean.iter().position(|m| !m.is_finite()) {
            return Err(Error::invalid(format!("mean entry {bad} is not finite")));
        }
        Ok(Self { mean, std })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Log density at `z`.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.mean
            .iter()
            .zip(&self.std)
            .zip(z)
            .map(|((m, s), x)| {
                let u = (x - m) / s;
                -0.5 * (u * u + ln_2pi) - s.ln()
            })
            .sum()
    }
}

/// Closed-form `KL[q ‖ p]` for diagonal Gaussians.
///
/// Each dimension contributes `½(r − 1 − ln r) + (μq − μp)²/(2σp²)` with
/// `r = σq²/σp²`; the per-dimension term is clamped at zero since rounding
/// can otherwise leave it at `-1e-17` when `q ≈ p`.
pub fn gaussian_kl(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    Ok(kl_parts(q.mean(), q.std(), p.mean(), p.std()))
}

#[inline]
pub(crate) fn kl_parts(qm: &[f64], qs: &[f64], pm: &[f64], ps: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..qm.len() {
        let r = (qs[i] / ps[i]).powi(2);
        let d = (qm[i] - pm[i]) / ps[i];
        let term = 0.5 * ((r - 1.0) - r.ln()) + 0.5 * d * d;
        total += term.max(0.0);
    }
    total
}

/// Reparameterized draw `z = μ + σ ⊙ noise`.
pub fn reparam_sample(g: &DiagGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: noise.len() });
    }
    Ok(g.mean.iter().zip(&g.std).zip(noise).map(|((m, s), e)| m + s * e).collect())
}
