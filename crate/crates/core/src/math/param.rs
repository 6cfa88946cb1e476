use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// A trainable 2-D tensor with its gradient slot.
///
/// Vectors are stored as `1 × n`. The gradient always has the value's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    value: Array2<f64>,
    grad: Array2<f64>,
}

impl ParamTensor {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    /// Entries drawn from `N(0, 1/fan_in)`.
    pub fn scaled_normal<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (1.0 / fan_in.max(1) as f64).sqrt()).expect("valid std");
        Self::new(Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng)))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn value(&self) -> &Array2<f64> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Array2<f64> {
        &mut self.value
    }

    pub fn grad(&self) -> &Array2<f64> {
        &self.grad
    }

    /// Row `r` of the value as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.value.ncols();
        &self.value.as_slice().expect("contiguous")[r * cols..(r + 1) * cols]
    }

    /// Flat view of the value, row-major.
    pub fn as_slice(&self) -> &[f64] {
        self.value.as_slice().expect("contiguous")
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate_grad(&mut self, g: &Array2<f64>) {
        assert_eq!(g.dim(), self.grad.dim(), "gradient shape must equal value shape");
        self.grad += g;
    }

    pub(crate) fn value_and_grad_mut(&mut self) -> (&mut Array2<f64>, &Array2<f64>) {
        (&mut self.value, &self.grad)
    }

    pub fn is_finite(&self) -> bool {
        self.value.iter().all(|v| v.is_finite())
    }
}
