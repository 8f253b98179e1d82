use ndarray::Array2;

/// Dense row-major matrix with an optional gradient slot.
///
/// Every value in the library is two-dimensional: batches are rows and
/// features are columns. Scalars are `1x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    value: Array2<f64>,
    requires_grad: bool,
    grad: Option<Array2<f64>>,
}

impl Tensor {
    pub fn new(value: Array2<f64>, requires_grad: bool) -> Self {
        Self {
            value,
            requires_grad,
            grad: None,
        }
    }

    pub fn constant(value: Array2<f64>) -> Self {
        Self::new(value, false)
    }

    pub fn scalar(x: f64) -> Self {
        Self::constant(Array2::from_elem((1, 1), x))
    }

    /// Builds a tensor from a shape and flat row-major data.
    pub fn from_shape_vec(shape: [usize; 2], data: Vec<f64>) -> Option<Self> {
        Array2::from_shape_vec((shape[0], shape[1]), data)
            .ok()
            .map(Self::constant)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn dims(&self) -> [usize; 2] {
        let (r, c) = self.value.dim();
        [r, c]
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn value(&self) -> &Array2<f64> {
        &self.value
    }

    pub fn into_value(self) -> Array2<f64> {
        self.value
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&Array2<f64>> {
        self.grad.as_ref()
    }

    pub(crate) fn set_grad(&mut self, grad: Array2<f64>) {
        debug_assert_eq!(grad.dim(), self.value.dim());
        self.grad = Some(grad);
    }

    /// Flat row-major view of the data.
    pub fn data(&self) -> Vec<f64> {
        self.value.iter().copied().collect()
    }
}
