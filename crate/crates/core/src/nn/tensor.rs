use super::{NnError, Scalar};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self, NnError> {
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Returns `[d0, d1, d2, d3]` or a shape error naming `what`.
    pub(crate) fn dims4(&self, what: &str) -> Result<[usize; 4], NnError> {
        match self.dims.as_slice() {
            &[a, b, c, d] => Ok([a, b, c, d]),
            other => Err(NnError::ShapeMismatch(format!(
                "{what}: expected a 4-d tensor, got {other:?}"
            ))),
        }
    }

    pub(crate) fn dims2(&self, what: &str) -> Result<[usize; 2], NnError> {
        match self.dims.as_slice() {
            &[a, b] => Ok([a, b]),
            other => Err(NnError::ShapeMismatch(format!(
                "{what}: expected a 2-d tensor, got {other:?}"
            ))),
        }
    }
}
